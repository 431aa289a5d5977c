#include "pearl/diffcore/adam.hpp"
#include "pearl/diffcore/distributions.hpp"
#include "pearl/diffcore/mlp.hpp"
#include "pearl/diffcore/ops.hpp"
#include "pearl/diffcore/tape.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace pearl;
using pearl::testing::numeric_grad;
using pearl::testing::relative_error;

namespace {

ParamStore scalar_store(double v) {
    ParamStore p;
    p.add_slice("w", 1, 1);
    p.values()[0] = v;
    return p;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = u(rng);
    return m;
}

}  // namespace

TEST(ParamStore, SlicesAreContiguousAndCoverTheArray) {
    ParamStore p;
    p.add_slice("a", 2, 3);
    p.add_slice("b", 1, 3);
    p.add_slice("c", 4, 1);
    ASSERT_EQ(p.size(), 13u);
    ASSERT_EQ(p.grads().size(), p.values().size());
    std::size_t next = 0;
    for (const auto& s : p.slices()) {
        EXPECT_EQ(s.offset, next);
        next += s.size();
    }
    EXPECT_EQ(next, p.size());
    EXPECT_EQ(p.find("b"), 1u);
    EXPECT_THROW(p.find("zz"), std::out_of_range);
    EXPECT_THROW(p.add_slice("empty", 0, 3), std::invalid_argument);
}

TEST(Backward, LinearLossGradientIsInput) {
    ParamStore p = scalar_store(0.7);
    Tape t;
    Var w = t.param(p, 0);
    Var loss = ops::mul(w, t.constant_scalar(3.0));
    t.backward(loss);
    EXPECT_DOUBLE_EQ(p.grads()[0], 3.0);
}

TEST(Backward, TanhSquaredMatchesFiniteDifference) {
    ParamStore p = scalar_store(0.5);
    Tape t;
    t.backward(ops::square(ops::tanh(t.param(p, 0))));
    const double analytic = p.grads()[0];
    auto loss = [&] { return std::pow(std::tanh(p.values()[0]), 2); };
    const double numeric = numeric_grad(p, loss, 1e-5)[0];
    EXPECT_LT(std::abs(analytic - numeric) / std::abs(numeric), 1e-5);
}

TEST(Backward, ConstantLossLeavesGradientsZero) {
    ParamStore p = scalar_store(1.5);
    Tape t;
    t.param(p, 0);
    t.backward(t.constant_scalar(4.0));
    EXPECT_EQ(p.grads()[0], 0.0);
}

TEST(Backward, RejectsNonScalarRootAndSecondSweep) {
    ParamStore p = scalar_store(1.0);
    {
        Tape t;
        Var w = ops::repeat_rows(t.param(p, 0), 2);
        EXPECT_THROW(t.backward(w), std::invalid_argument);
    }
    Tape t;
    Var l = ops::square(t.param(p, 0));
    t.backward(l);
    EXPECT_TRUE(t.consumed());
    EXPECT_THROW(t.backward(l), std::logic_error);
    EXPECT_THROW(t.constant_scalar(1.0), std::logic_error);
}

TEST(Backward, NonTrainableLeafPassesGradientToOtherInputs) {
    ParamStore a = scalar_store(2.0);
    ParamStore b = scalar_store(5.0);
    Tape t;
    Var loss = ops::mul(t.param(a, 0, true), t.param(b, 0, false));
    t.backward(loss);
    EXPECT_DOUBLE_EQ(a.grads()[0], 5.0);
    EXPECT_EQ(b.grads()[0], 0.0);
}

// Every primitive: a random smooth scalar reduction of the op output, checked
// against central differences through a parameter store holding the inputs.
struct OpCase {
    const char* name;
    Eigen::Index ar, ac, br, bc;
    double lo, hi;
    std::function<Var(const Var&, const Var&)> op;
};

class PrimitiveGradient : public ::testing::TestWithParam<OpCase> {};

TEST_P(PrimitiveGradient, MatchesCentralDifferences) {
    const OpCase& c = GetParam();
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        ParamStore p;
        p.add_slice("a", c.ar, c.ac);
        p.add_slice("b", c.br, c.bc);
        p.value(0) = random_matrix(c.ar, c.ac, rng, c.lo, c.hi);
        p.value(1) = random_matrix(c.br, c.bc, rng, c.lo, c.hi);
        Matrix weights;
        auto run = [&](Tape& t) {
            Var out = c.op(t.param(p, 0), t.param(p, 1));
            if (weights.size() == 0) weights = random_matrix(out.rows(), out.cols(), rng);
            return ops::sum(ops::mul(out, t.constant(weights)));
        };
        Tape t;
        Var loss = run(t);
        t.backward(loss);
        const std::vector<double> analytic = p.grads();
        auto f = [&] {
            Tape u;
            return run(u).scalar();
        };
        const auto numeric = numeric_grad(p, f);
        EXPECT_LT(relative_error(analytic, numeric), 1e-4) << c.name << " trial " << trial;
        p.zero_grad();
    }
}

INSTANTIATE_TEST_SUITE_P(
    Ops, PrimitiveGradient,
    ::testing::Values(
        OpCase{"add_broadcast_row", 3, 4, 1, 4, -1, 1, [](const Var& a, const Var& b) { return ops::add(a, b); }},
        OpCase{"sub_broadcast_col", 3, 4, 3, 1, -1, 1, [](const Var& a, const Var& b) { return ops::sub(a, b); }},
        OpCase{"mul", 3, 4, 3, 4, -1, 1, [](const Var& a, const Var& b) { return ops::mul(a, b); }},
        OpCase{"mul_scalar_broadcast", 3, 4, 1, 1, -1, 1, [](const Var& a, const Var& b) { return ops::mul(a, b); }},
        OpCase{"div", 3, 2, 3, 2, 0.5, 2, [](const Var& a, const Var& b) { return ops::div(a, b); }},
        OpCase{"matmul", 3, 4, 4, 2, -1, 1, [](const Var& a, const Var& b) { return ops::matmul(a, b); }},
        OpCase{"linear", 5, 3, 3, 2, -1, 1,
               [](const Var& x, const Var& w) {
                   return ops::linear(x, w, ops::slice_rows(ops::scale(w, 0.5), 0, 1));
               }},
        OpCase{"relu", 4, 3, 1, 1, -1, 1, [](const Var& a, const Var& b) { return ops::relu(ops::add(a, b)); }},
        OpCase{"tanh", 4, 3, 1, 1, -2, 2, [](const Var& a, const Var&) { return ops::tanh(a); }},
        OpCase{"exp", 4, 3, 1, 1, -2, 2, [](const Var& a, const Var&) { return ops::exp(a); }},
        OpCase{"log", 4, 3, 1, 1, 0.2, 3, [](const Var& a, const Var&) { return ops::log(a); }},
        OpCase{"sqrt", 4, 3, 1, 1, 0.2, 3, [](const Var& a, const Var&) { return ops::sqrt(a); }},
        OpCase{"square", 4, 3, 1, 1, -2, 2, [](const Var& a, const Var&) { return ops::square(a); }},
        OpCase{"reciprocal", 4, 3, 1, 1, 0.5, 3, [](const Var& a, const Var&) { return ops::reciprocal(a); }},
        OpCase{"softplus", 4, 3, 1, 1, -30, 30, [](const Var& a, const Var&) { return ops::softplus(a); }},
        OpCase{"clamp", 4, 3, 1, 1, -2, 2, [](const Var& a, const Var&) { return ops::clamp(a, -1.0, 1.0); }},
        OpCase{"minimum", 4, 3, 4, 3, -1, 1, [](const Var& a, const Var& b) { return ops::minimum(a, b); }},
        OpCase{"mean", 4, 3, 1, 1, -1, 1, [](const Var& a, const Var&) { return ops::mean(a); }},
        OpCase{"row_sum", 4, 3, 1, 1, -1, 1, [](const Var& a, const Var&) { return ops::row_sum(a); }},
        OpCase{"col_sum", 4, 3, 1, 1, -1, 1, [](const Var& a, const Var&) { return ops::col_sum(a); }},
        OpCase{"concat_cols", 4, 3, 4, 2, -1, 1, [](const Var& a, const Var& b) { return ops::concat_cols({a, b}); }},
        OpCase{"concat_rows", 2, 3, 4, 3, -1, 1,
               [](const Var& a, const Var& b) {
                   std::vector<Var> v{a, b};
                   return ops::concat_rows(v);
               }},
        OpCase{"slice_cols", 4, 5, 1, 1, -1, 1, [](const Var& a, const Var&) { return ops::slice_cols(a, 1, 3); }},
        OpCase{"slice_rows", 5, 2, 1, 1, -1, 1, [](const Var& a, const Var&) { return ops::slice_rows(a, 2, 2); }},
        OpCase{"repeat_rows", 1, 3, 1, 1, -1, 1, [](const Var& a, const Var&) { return ops::repeat_rows(a, 4); }},
        OpCase{"scale_add_scalar", 3, 3, 1, 1, -1, 1,
               [](const Var& a, const Var&) { return ops::add_scalar(ops::scale(a, -2.5), 0.3); }}),
    [](const ::testing::TestParamInfo<OpCase>& info) { return std::string(info.param.name); });

TEST(Ops, DetachBlocksGradient) {
    ParamStore p = scalar_store(1.3);
    Tape t;
    Var w = t.param(p, 0);
    t.backward(ops::add(ops::square(ops::detach(w)), ops::scale(w, 2.0)));
    EXPECT_DOUBLE_EQ(p.grads()[0], 2.0);
}

TEST(Ops, SoftplusIsStableAtExtremes) {
    Tape t;
    Matrix x(1, 3);
    x << -800.0, 0.0, 800.0;
    Var y = ops::softplus(t.constant(x));
    EXPECT_GE(y.value()(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(y.value()(0, 1), std::log(2.0));
    EXPECT_DOUBLE_EQ(y.value()(0, 2), 800.0);
}

TEST(Mlp, ZeroParametersGiveZeroOutput) {
    MlpSpec spec{3, {4, 4}, 2, Activation::relu, Activation::identity};
    Mlp net(spec);
    Tape t;
    Matrix x(2, 3);
    x << 1, -2, 3, 0.5, 0.1, -7;
    Var y = net.forward(t.constant(x), t);
    EXPECT_EQ(y.rows(), 2);
    EXPECT_EQ(y.cols(), 2);
    EXPECT_EQ(y.value().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Mlp, IdentityLayerIsIdentityMap) {
    MlpSpec spec{2, {}, 2, Activation::relu, Activation::identity};
    Mlp net(spec);
    net.params.value(0) = Matrix::Identity(2, 2);
    Tape t;
    Matrix x(1, 2);
    x << 1, 2;
    Var y = net.forward(t.constant(x), t);
    EXPECT_EQ(y.value(), x);
}

TEST(Mlp, MatchesHandRolledForwardPass) {
    std::mt19937_64 rng(5);
    MlpSpec spec{2, {4}, 1, Activation::relu, Activation::identity};
    Mlp net(spec, rng, 1.0);
    const Matrix W1 = net.params.value(0), b1 = net.params.value(1);
    const Matrix W2 = net.params.value(2), b2 = net.params.value(3);
    const double x0 = 0.3, x1 = -1.2;
    double out = b2(0, 0);
    for (int j = 0; j < 4; ++j) {
        const double h = std::max(0.0, x0 * W1(0, j) + x1 * W1(1, j) + b1(0, j));
        out += h * W2(j, 0);
    }
    Matrix x(1, 2);
    x << x0, x1;
    Tape t;
    EXPECT_NEAR(net.forward(t.constant(x), t).scalar(), out, 1e-14);
    EXPECT_NEAR(net.eval(x)(0, 0), out, 1e-14);
}

TEST(Mlp, RejectsDimensionMismatch) {
    MlpSpec spec{3, {4}, 1, Activation::relu, Activation::identity};
    Mlp net(spec);
    Tape t;
    EXPECT_THROW(net.forward(t.constant(Matrix::Zero(1, 2)), t), std::invalid_argument);
    EXPECT_THROW(net.eval(Matrix::Zero(1, 4)), std::invalid_argument);
    EXPECT_THROW((MlpSpec{0, {4}, 1}).validate(), std::invalid_argument);
    EXPECT_THROW((MlpSpec{1, {4}, 1, Activation::identity}).validate(), std::invalid_argument);
}

TEST(Mlp, ForwardIsDeterministicAndGradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(9);
    for (auto act : {Activation::relu, Activation::tanh}) {
        MlpSpec spec{3, {5, 4}, 2, act, Activation::tanh};
        Mlp net(spec, rng, 1.0);
        const Matrix x = random_matrix(6, 3, rng);
        const Matrix w = random_matrix(6, 2, rng);
        auto loss = [&](Tape& t) { return ops::sum(ops::mul(net.forward(t.constant(x), t), t.constant(w))); };
        Tape t1, t2;
        Var l1 = loss(t1);
        EXPECT_EQ(l1.scalar(), loss(t2).scalar());
        t1.backward(l1);
        const auto analytic = net.params.grads();
        const auto numeric = numeric_grad(net.params, [&] {
            Tape t;
            return loss(t).scalar();
        });
        EXPECT_LT(relative_error(analytic, numeric), 1e-4);
    }
}

TEST(ReparamSample, ArithmeticExamples) {
    Tape t;
    Matrix m(1, 2), v(1, 2), e(1, 2);
    m << 0, 0;
    v << 1, 1;
    e << 0, 0;
    EXPECT_EQ(reparam_sample(t.constant(m), t.constant(v), e, t).value(), Matrix::Zero(1, 2));
    m << 1, 2;
    v << 4, 9;
    e << 1, -1;
    Matrix want(1, 2);
    want << 3, -1;
    EXPECT_EQ(reparam_sample(t.constant(m), t.constant(v), e, t).value(), want);
    v << 1, 0;
    EXPECT_THROW(reparam_sample(t.constant(m), t.constant(v), e, t), std::invalid_argument);
}

TEST(ReparamSample, VarianceGradientIsHalfNoiseOverStd) {
    ParamStore p;
    p.add_slice("mean", 1, 2);
    p.add_slice("var", 1, 2);
    p.value(1).setOnes();
    Matrix e = Matrix::Ones(1, 2);
    Tape t;
    t.backward(ops::sum(reparam_sample(t.param(p, 0), t.param(p, 1), e, t)));
    EXPECT_DOUBLE_EQ(p.grad(1)(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(p.grad(1)(0, 1), 0.5);
    EXPECT_DOUBLE_EQ(p.grad(0)(0, 0), 1.0);
    const auto numeric = numeric_grad(p, [&] {
        Tape u;
        return ops::sum(reparam_sample(u.param(p, 0), u.param(p, 1), e, u)).scalar();
    });
    EXPECT_LT(relative_error(p.grads(), numeric), 1e-8);
}

TEST(ReparamSample, MatchesTargetMoments) {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n(0.0, 1.0);
    const int N = 100000;
    const double mean = 1.5, var = 2.25;
    Matrix eps(N, 1);
    for (int i = 0; i < N; ++i) eps(i, 0) = n(rng);
    Tape t;
    Matrix out = reparam_sample(t.constant(Matrix::Constant(N, 1, mean)), t.constant(Matrix::Constant(N, 1, var)), eps, t)
                     .value();
    const double m = out.mean();
    const double v = (out.array() - m).square().sum() / (N - 1);
    EXPECT_LT(std::abs(m - mean), 3.0 * std::sqrt(var / N));
    EXPECT_LT(std::abs(v - var) / var, 0.05);
}

TEST(Adam, ZeroGradientLeavesValuesUnchanged) {
    ParamStore p;
    p.add_slice("w", 2, 2);
    p.values() = {1, 2, 3, 4};
    AdamState s(4, 1e-3);
    adam_step(p, s);
    EXPECT_EQ(p.values(), (std::vector<double>{1, 2, 3, 4}));
    EXPECT_EQ(s.step_count, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    ParamStore p = scalar_store(0.0);
    AdamState s(1, 1e-3);
    s.epsilon = 1e-8;
    p.grads()[0] = 1.0;
    adam_step(p, s);
    EXPECT_NEAR(p.values()[0], -1e-3, 1e-6);
    EXPECT_EQ(p.grads()[0], 0.0);
}

TEST(Adam, OppositeGradientsGiveOppositeUpdates) {
    ParamStore p;
    p.add_slice("w", 1, 2);
    AdamState s(2, 1e-2);
    for (int k = 0; k < 3; ++k) {
        p.grads() = {0.7, -0.7};
        adam_step(p, s);
    }
    EXPECT_EQ(p.values()[0], -p.values()[1]);
    EXPECT_LT(p.values()[0], 0.0);
}

TEST(Adam, MatchesClosedFormOverSeveralSteps) {
    ParamStore p = scalar_store(0.0);
    AdamState s(1, 0.01);
    const double g[] = {0.5, -1.0, 2.0};
    double m = 0, v = 0, x = 0;
    for (int k = 0; k < 3; ++k) {
        p.grads()[0] = g[k];
        adam_step(p, s);
        m = 0.9 * m + 0.1 * g[k];
        v = 0.999 * v + 0.001 * g[k] * g[k];
        const double mh = m / (1 - std::pow(0.9, k + 1)), vh = v / (1 - std::pow(0.999, k + 1));
        x -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
    EXPECT_NEAR(p.values()[0], x, 1e-15);
}

TEST(Adam, RejectsMismatchedState) {
    ParamStore p = scalar_store(0.0);
    AdamState s(3, 1e-3);
    EXPECT_THROW(adam_step(p, s), std::invalid_argument);
}

namespace {

double squashed_log_density_at_zero(double log_std) {
    // u = 0, tanh'(0) = 1
    return -0.5 * std::log(2.0 * std::numbers::pi) - log_std;
}

}  // namespace

TEST(TanhGaussian, ModeAtZero) {
    Tape t;
    SquashedSample s = tanh_gaussian_policy_sample(t.constant(Matrix::Zero(1, 1)), t.constant(Matrix::Constant(1, 1, -0.4)),
                                                   Matrix::Zero(1, 1), t);
    EXPECT_EQ(s.action.scalar(), 0.0);
    EXPECT_NEAR(s.log_prob.scalar(), squashed_log_density_at_zero(-0.4), 1e-14);
}

TEST(TanhGaussian, ActionsStrictlyInsideUnitBox) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 5.0);
    Matrix noise(200, 3), mean(200, 3);
    for (Eigen::Index i = 0; i < noise.size(); ++i) {
        noise(i) = n(rng);
        mean(i) = n(rng);
    }
    Tape t;
    SquashedSample s = tanh_gaussian_policy_sample(t.constant(mean), t.constant(Matrix::Constant(200, 3, 1.5)), noise, t);
    EXPECT_LT(s.action.value().cwiseAbs().maxCoeff(), 1.0);
    EXPECT_TRUE(s.log_prob.value().allFinite());
    EXPECT_EQ(s.log_prob.cols(), 1);
}

TEST(TanhGaussian, LogProbMatchesKernelDensityEstimate) {
    const double mu = 0.3, log_std = -0.5;
    const int N = 1000000;
    std::mt19937_64 rng(17);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> samples(N);
    for (auto& a : samples) a = std::tanh(mu + std::exp(log_std) * n(rng));

    const double bw = 0.01;
    for (double u : {-0.1, 0.3, 0.6}) {
        // Query at the image of a chosen pre-squash point.
        const double a = std::tanh(u);
        double kde = 0.0;
        for (double x : samples) {
            const double z = (a - x) / bw;
            if (std::abs(z) < 8.0) kde += std::exp(-0.5 * z * z);
        }
        kde /= N * bw * std::sqrt(2.0 * std::numbers::pi);

        Tape t;
        Matrix noise(1, 1);
        noise(0, 0) = (u - mu) / std::exp(log_std);
        SquashedSample s = tanh_gaussian_policy_sample(t.constant(Matrix::Constant(1, 1, mu)),
                                                       t.constant(Matrix::Constant(1, 1, log_std)), noise, t);
        EXPECT_NEAR(s.action.scalar(), a, 1e-14);
        const double density = std::exp(s.log_prob.scalar());
        EXPECT_LT(std::abs(density - kde) / density, 0.02) << "u=" << u;
    }
}

TEST(TanhGaussian, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(8);
    ParamStore p;
    p.add_slice("mean", 4, 2);
    p.add_slice("log_std", 4, 2);
    p.value(0) = random_matrix(4, 2, rng, -2, 2);
    p.value(1) = random_matrix(4, 2, rng, -1.5, 0.5);
    const Matrix noise = random_matrix(4, 2, rng, -2, 2);
    const Matrix w = random_matrix(4, 2, rng);
    auto loss = [&](Tape& t) {
        SquashedSample s = tanh_gaussian_policy_sample(t.param(p, 0), t.param(p, 1), noise, t);
        return ops::add(ops::sum(s.log_prob), ops::sum(ops::mul(s.action, t.constant(w))));
    };
    Tape t;
    t.backward(loss(t));
    const auto numeric = numeric_grad(p, [&] {
        Tape u;
        return loss(u).scalar();
    });
    EXPECT_LT(relative_error(p.grads(), numeric), 1e-4);
}
