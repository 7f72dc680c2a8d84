#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace koopman {

/// Base of every numerical failure raised by the library. `kind()` is the
/// stable machine-readable name that the CLI prints alongside the message.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define KOOPMAN_DEFINE_ERROR(Name)                                           \
    class Name : public Error {                                              \
    public:                                                                  \
        explicit Name(const std::string& what) : Error(#Name, what) {}       \
    }

KOOPMAN_DEFINE_ERROR(SolveFailed);
KOOPMAN_DEFINE_ERROR(NonFiniteState);
KOOPMAN_DEFINE_ERROR(InvalidRegion);
KOOPMAN_DEFINE_ERROR(InvalidArgument);
KOOPMAN_DEFINE_ERROR(TrajectoryTooShort);
KOOPMAN_DEFINE_ERROR(InvalidSplit);
KOOPMAN_DEFINE_ERROR(InvalidPermutation);
KOOPMAN_DEFINE_ERROR(InvalidProbability);
KOOPMAN_DEFINE_ERROR(EmptyChain);
KOOPMAN_DEFINE_ERROR(DegenerateRow);
KOOPMAN_DEFINE_ERROR(InvalidSeedSet);
KOOPMAN_DEFINE_ERROR(PreconditionUnsatisfiable);

#undef KOOPMAN_DEFINE_ERROR

class RankDeficient : public Error {
public:
    RankDeficient(std::ptrdiff_t rank, std::ptrdiff_t cols, const std::string& detail = {})
        : Error("RankDeficient", "estimated rank " + std::to_string(rank) + " < " +
                                     std::to_string(cols) + " columns" +
                                     (detail.empty() ? std::string{} : " (" + detail + ")")),
          rank_(rank) {}

    std::ptrdiff_t rank() const noexcept { return rank_; }

private:
    std::ptrdiff_t rank_;
};

class EigFailed : public Error {
public:
    explicit EigFailed(int iterations)
        : Error("EigFailed", "no convergence after " + std::to_string(iterations) +
                                 " iterations"),
          iterations_(iterations) {}

    int iterations() const noexcept { return iterations_; }

private:
    int iterations_;
};

}  // namespace koopman
