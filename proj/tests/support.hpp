#ifndef S3G_TESTS_SUPPORT_HPP
#define S3G_TESTS_SUPPORT_HPP

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "s3g/common.hpp"

namespace testing {

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("s3g_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline s3g::Matrix randn(s3g::Index rows, s3g::Index cols, std::mt19937_64& rng, double sd = 1.0) {
    std::normal_distribution<double> g(0.0, sd);
    return s3g::Matrix::NullaryExpr(rows, cols, [&] { return g(rng); });
}

inline s3g::Vector randn(s3g::Index n, std::mt19937_64& rng, double sd = 1.0) {
    std::normal_distribution<double> g(0.0, sd);
    return s3g::Vector::NullaryExpr(n, [&] { return g(rng); });
}

}  // namespace testing

#endif
