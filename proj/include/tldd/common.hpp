#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace tldd {

using Real = double;

/// Row-compressed sparse operator. Eigen keeps column indices sorted and
/// duplicate-free once compressed.
using SparseMatrix = Eigen::SparseMatrix<Real, Eigen::RowMajor, int>;
using DenseVector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;

template <int Dim>
using Point = Eigen::Matrix<Real, Dim, 1>;

enum class ErrorCode {
    InvalidGeometry,
    NonDivisibleSpacing,
    OutOfDomain,
    UnsupportedDegree,
    NonpositiveCoefficient,
    ForeignFacet,
    IndexOutOfRange,
    OrphanInterfaceFacet,
    DimensionMismatch,
    NoConvergence,
    SingularMatrix,
    TooLarge,
    RankDeficient,
    NonpositiveConstant,
    InsufficientRatios,
    PicardNoConvergence,
    InvalidConfig,
    IoError,
};

inline const char* to_string(ErrorCode c)
{
    switch (c) {
    case ErrorCode::InvalidGeometry: return "InvalidGeometry";
    case ErrorCode::NonDivisibleSpacing: return "NonDivisibleSpacing";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::UnsupportedDegree: return "UnsupportedDegree";
    case ErrorCode::NonpositiveCoefficient: return "NonpositiveCoefficient";
    case ErrorCode::ForeignFacet: return "ForeignFacet";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::OrphanInterfaceFacet: return "OrphanInterfaceFacet";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::SingularMatrix: return "SingularMatrix";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::NonpositiveConstant: return "NonpositiveConstant";
    case ErrorCode::InsufficientRatios: return "InsufficientRatios";
    case ErrorCode::PicardNoConvergence: return "PicardNoConvergence";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what)
        , code_(code)
    {
    }

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

#define TLDD_THROW_IF(cond, code, msg)                                                             \
    do {                                                                                           \
        if (cond)                                                                                  \
            throw ::tldd::Error((code), (msg));                                                    \
    } while (0)

/// Prescribed wall temperature used throughout the reference setup.
inline constexpr Real kAmbientTemperature = 293.15;

} // namespace tldd
