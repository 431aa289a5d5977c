#pragma once

#include "pearl/diffcore/adam.hpp"
#include "pearl/diffcore/param_store.hpp"
#include "pearl/metaloop/trainer.hpp"
#include "pearl/replay/task_buffer.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pearl {

inline constexpr char kCheckpointMagic[8] = {'P', 'E', 'A', 'R', 'L', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Little-endian byte sink.
class ByteWriter {
public:
    template <class T>
        requires std::is_arithmetic_v<T>
    void put(T v) {
        static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");
        char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        buf_.append(b, sizeof(T));
    }
    void put_string(std::string_view s) {
        put<std::uint64_t>(s.size());
        buf_.append(s.data(), s.size());
    }
    void put_doubles(const std::vector<double>& v) {
        put<std::uint64_t>(v.size());
        for (double d : v) put(d);
    }
    const std::string& bytes() const { return buf_; }
    std::string take() { return std::move(buf_); }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view bytes) : b_(bytes) {}

    template <class T>
        requires std::is_arithmetic_v<T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, b_.data() + at_, sizeof(T));
        at_ += sizeof(T);
        return v;
    }
    std::string get_string() {
        const auto n = get<std::uint64_t>();
        need(n);
        std::string s(b_.substr(at_, n));
        at_ += n;
        return s;
    }
    std::vector<double> get_doubles() {
        const auto n = get<std::uint64_t>();
        need(n * sizeof(double));
        std::vector<double> v(n);
        for (auto& d : v) d = get<double>();
        return v;
    }
    bool done() const { return at_ == b_.size(); }

private:
    void need(std::uint64_t n) const {
        if (n > b_.size() - at_) throw CheckpointError("checkpoint truncated");
    }
    std::string_view b_;
    std::size_t at_ = 0;
};

/// Named binary sections plus the configuration text they were produced under.
///
/// Layout: magic(8) version(u32) config_hash(u64) section_count(u32)
/// { name(str) payload(str) }* checksum(u64, FNV-1a of everything before it).
struct Checkpoint {
    std::string config_text;
    std::map<std::string, std::string> sections;

    std::uint64_t config_hash() const { return fnv1a(config_text); }

    std::string encode() const {
        ByteWriter w;
        for (char c : kCheckpointMagic) w.put(c);
        w.put(kCheckpointVersion);
        w.put(config_hash());
        w.put<std::uint32_t>(std::uint32_t(sections.size() + 1));
        w.put_string("config");
        w.put_string(config_text);
        for (const auto& [name, payload] : sections) {
            w.put_string(name);
            w.put_string(payload);
        }
        std::string out = w.take();
        ByteWriter tail;
        tail.put(fnv1a(out));
        return out + tail.bytes();
    }

    static Checkpoint decode(std::string_view bytes) {
        if (bytes.size() < sizeof kCheckpointMagic + 8) throw CheckpointError("checkpoint too short");
        if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
            throw CheckpointError("not a checkpoint (bad magic)");
        }
        const std::string_view body = bytes.substr(0, bytes.size() - 8);
        ByteReader tail(bytes.substr(bytes.size() - 8));
        if (tail.get<std::uint64_t>() != fnv1a(body)) throw CheckpointError("checkpoint checksum mismatch");

        ByteReader r(body.substr(sizeof kCheckpointMagic));
        const auto version = r.get<std::uint32_t>();
        if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version");
        const auto hash = r.get<std::uint64_t>();
        const auto count = r.get<std::uint32_t>();
        Checkpoint cp;
        for (std::uint32_t i = 0; i < count; ++i) {
            std::string name = r.get_string();
            std::string payload = r.get_string();
            if (name == "config") cp.config_text = std::move(payload);
            else cp.sections.emplace(std::move(name), std::move(payload));
        }
        if (!r.done()) throw CheckpointError("trailing bytes in checkpoint");
        if (cp.config_hash() != hash) throw CheckpointError("config hash mismatch");
        return cp;
    }

    const std::string& section(const std::string& name) const {
        auto it = sections.find(name);
        if (it == sections.end()) throw CheckpointError("checkpoint lacks section '" + name + "'");
        return it->second;
    }

    void write_file(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw CheckpointError("cannot open '" + path + "' for writing");
        const std::string bytes = encode();
        out.write(bytes.data(), std::streamsize(bytes.size()));
        if (!out) throw CheckpointError("write failed for '" + path + "'");
    }

    static Checkpoint read_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
        std::ostringstream ss;
        ss << in.rdbuf();
        return decode(ss.str());
    }
};

namespace detail {

inline std::string encode_store(const ParamStore& p) {
    ByteWriter w;
    w.put<std::uint64_t>(p.slice_count());
    for (const auto& s : p.slices()) {
        w.put_string(s.name);
        w.put<std::uint64_t>(s.rows);
        w.put<std::uint64_t>(s.cols);
    }
    w.put_doubles(p.values());
    return w.take();
}

inline void decode_store(const std::string& bytes, ParamStore& p, const std::string& what) {
    ByteReader r(bytes);
    const auto n = r.get<std::uint64_t>();
    if (n != p.slice_count()) throw CheckpointError(what + ": layout differs from configuration");
    for (const auto& s : p.slices()) {
        if (r.get_string() != s.name || r.get<std::uint64_t>() != s.rows || r.get<std::uint64_t>() != s.cols) {
            throw CheckpointError(what + ": layout differs from configuration");
        }
    }
    auto v = r.get_doubles();
    if (v.size() != p.size() || !r.done()) throw CheckpointError(what + ": bad parameter payload");
    p.values() = std::move(v);
    p.zero_grad();
}

inline std::string encode_adam(const AdamState& s) {
    ByteWriter w;
    w.put(s.step_count);
    w.put(s.beta1);
    w.put(s.beta2);
    w.put(s.epsilon);
    w.put(s.lr);
    w.put_doubles(s.first_moment);
    w.put_doubles(s.second_moment);
    return w.take();
}

inline void decode_adam(const std::string& bytes, AdamState& s, const std::string& what) {
    ByteReader r(bytes);
    AdamState out;
    out.step_count = r.get<std::uint64_t>();
    out.beta1 = r.get<double>();
    out.beta2 = r.get<double>();
    out.epsilon = r.get<double>();
    out.lr = r.get<double>();
    out.first_moment = r.get_doubles();
    out.second_moment = r.get_doubles();
    if (!r.done() || out.first_moment.size() != s.first_moment.size()) throw CheckpointError(what + ": bad payload");
    s = std::move(out);
}

inline void put_transition(ByteWriter& w, const Transition& t) {
    w.put_doubles(t.state);
    w.put_doubles(t.action);
    w.put(t.reward);
    w.put(t.context_reward);
    w.put_doubles(t.next_state);
    w.put<std::uint8_t>(t.done ? 1 : 0);
}

inline Transition get_transition(ByteReader& r) {
    Transition t;
    t.state = r.get_doubles();
    t.action = r.get_doubles();
    t.reward = r.get<double>();
    t.context_reward = r.get<double>();
    t.next_state = r.get_doubles();
    t.done = r.get<std::uint8_t>() != 0;
    return t;
}

}  // namespace detail

inline std::string encode_buffer(const TaskBuffer& b) {
    const auto raw = b.raw();
    ByteWriter w;
    w.put<std::uint64_t>(b.capacity());
    w.put<std::uint64_t>(raw.evicted);
    w.put<std::uint64_t>(raw.recent_abs);
    w.put<std::uint64_t>(raw.starts.size());
    for (auto s : raw.starts) w.put<std::uint64_t>(s);
    w.put<std::uint64_t>(raw.data.size());
    for (const auto& t : raw.data) detail::put_transition(w, t);
    return w.take();
}

inline TaskBuffer decode_buffer(const std::string& bytes) {
    ByteReader r(bytes);
    TaskBuffer b(r.get<std::uint64_t>());
    TaskBuffer::RawState raw;
    raw.evicted = r.get<std::uint64_t>();
    raw.recent_abs = r.get<std::uint64_t>();
    const auto ns = r.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < ns; ++i) raw.starts.push_back(r.get<std::uint64_t>());
    const auto nd = r.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < nd; ++i) raw.data.push_back(detail::get_transition(r));
    if (!r.done()) throw CheckpointError("buffer: trailing bytes");
    b.restore(std::move(raw));
    return b;
}

namespace detail {

inline std::string encode_rng(const std::mt19937_64& e) {
    std::ostringstream s;
    s << e;
    return s.str();
}

inline void decode_rng(const std::string& text, std::mt19937_64& e) {
    std::istringstream s(text);
    s >> e;
    if (s.fail()) throw CheckpointError("bad random engine state");
}

}  // namespace detail

/// Captures everything needed to resume or evaluate a trainer.
inline Checkpoint make_checkpoint(const MetaTrainer& t, std::string config_text, bool include_buffers = true) {
    Checkpoint cp;
    cp.config_text = std::move(config_text);
    const PearlAgent& a = t.agent();
    cp.sections["params/encoder"] = detail::encode_store(a.encoder.params());
    cp.sections["params/policy"] = detail::encode_store(a.nets.policy.params);
    cp.sections["params/q1"] = detail::encode_store(a.nets.q1.params);
    cp.sections["params/q2"] = detail::encode_store(a.nets.q2.params);
    cp.sections["params/value"] = detail::encode_store(a.nets.value.params);
    cp.sections["params/target_value"] = detail::encode_store(a.nets.target_value.params);
    cp.sections["adam/encoder"] = detail::encode_adam(a.opt_encoder);
    cp.sections["adam/policy"] = detail::encode_adam(a.opt_policy);
    cp.sections["adam/q1"] = detail::encode_adam(a.opt_q1);
    cp.sections["adam/q2"] = detail::encode_adam(a.opt_q2);
    cp.sections["adam/value"] = detail::encode_adam(a.opt_value);
    const RngStreams& r = t.rngs();
    cp.sections["rng/init"] = detail::encode_rng(r.init);
    cp.sections["rng/collect"] = detail::encode_rng(r.collect);
    cp.sections["rng/rl_batch"] = detail::encode_rng(r.rl_batch);
    cp.sections["rng/context"] = detail::encode_rng(r.context);
    cp.sections["rng/noise"] = detail::encode_rng(r.noise);
    cp.sections["rng/eval"] = detail::encode_rng(r.eval);
    ByteWriter c;
    c.put<std::uint64_t>(t.env_steps());
    c.put<std::uint64_t>(t.optimizer_steps());
    c.put<std::uint64_t>(t.iteration());
    cp.sections["counters"] = c.take();
    if (include_buffers) {
        for (std::size_t i = 0; i < t.buffers().size(); ++i) {
            cp.sections["buffer/" + std::to_string(i)] = encode_buffer(t.buffers()[i]);
        }
    }
    return cp;
}

/// Loads parameters, optimizer and RNG state into a trainer built from the
/// checkpoint's own configuration. Buffers are restored when present.
inline void restore_checkpoint(MetaTrainer& t, const Checkpoint& cp) {
    PearlAgent& a = t.agent();
    detail::decode_store(cp.section("params/encoder"), a.encoder.params(), "encoder");
    detail::decode_store(cp.section("params/policy"), a.nets.policy.params, "policy");
    detail::decode_store(cp.section("params/q1"), a.nets.q1.params, "q1");
    detail::decode_store(cp.section("params/q2"), a.nets.q2.params, "q2");
    detail::decode_store(cp.section("params/value"), a.nets.value.params, "value");
    detail::decode_store(cp.section("params/target_value"), a.nets.target_value.params, "target_value");
    detail::decode_adam(cp.section("adam/encoder"), a.opt_encoder, "adam/encoder");
    detail::decode_adam(cp.section("adam/policy"), a.opt_policy, "adam/policy");
    detail::decode_adam(cp.section("adam/q1"), a.opt_q1, "adam/q1");
    detail::decode_adam(cp.section("adam/q2"), a.opt_q2, "adam/q2");
    detail::decode_adam(cp.section("adam/value"), a.opt_value, "adam/value");
    RngStreams& r = t.rngs();
    detail::decode_rng(cp.section("rng/init"), r.init);
    detail::decode_rng(cp.section("rng/collect"), r.collect);
    detail::decode_rng(cp.section("rng/rl_batch"), r.rl_batch);
    detail::decode_rng(cp.section("rng/context"), r.context);
    detail::decode_rng(cp.section("rng/noise"), r.noise);
    detail::decode_rng(cp.section("rng/eval"), r.eval);
    ByteReader c(cp.section("counters"));
    const auto env = c.get<std::uint64_t>();
    const auto opt = c.get<std::uint64_t>();
    const auto it = c.get<std::uint64_t>();
    t.set_counters(env, opt, it);
    for (std::size_t i = 0; i < t.buffers().size(); ++i) {
        auto s = cp.sections.find("buffer/" + std::to_string(i));
        if (s != cp.sections.end()) t.buffers()[i] = decode_buffer(s->second);
    }
}

}  // namespace pearl
