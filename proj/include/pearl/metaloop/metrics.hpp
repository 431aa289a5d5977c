#pragma once

#include <json.hpp>

#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace pearl {

/// Append-only line-delimited JSON records.
class MetricsLog {
public:
    MetricsLog() = default;
    explicit MetricsLog(std::ostream* out) : out_(out) {}

    void write(const nlohmann::json& record) {
        if (out_) {
            (*out_) << record.dump() << '\n';
            out_->flush();
        }
    }

    bool enabled() const { return out_ != nullptr; }

private:
    std::ostream* out_ = nullptr;
};

}  // namespace pearl
