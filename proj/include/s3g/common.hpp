#ifndef S3G_COMMON_HPP
#define S3G_COMMON_HPP

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace s3g {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Rank-3 tensor stored as a list of matrices; the outer index is the stock
// (or the slice, where documented).
using Tensor3 = std::vector<Matrix>;

enum class ErrorCode {
    Config,
    Parse,
    Data,
    InsufficientHistory,
    Spec,
    Shape,
    Io,
    Checkpoint,
    Version,
    Fingerprint,
    Divergence,
    NonFinite,
    GradCheck,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& msg) {
    if (!cond) throw Error(code, msg);
}

}  // namespace s3g

#endif  // S3G_COMMON_HPP
