#ifndef UFMC_ANM_ERROR_HPP
#define UFMC_ANM_ERROR_HPP

#include <stdexcept>
#include <string>
#include <utility>

namespace ufmc
{

/// Base of every exception thrown by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// A scalar parameter is outside its admissible range.
class InvalidParameter : public Error
{
public:
    using Error::Error;
};

/// Input data has the wrong shape or contains non-finite values.
class InvalidInput : public Error
{
public:
    using Error::Error;
};

/// A claimed atomic decomposition does not reproduce the vector it describes.
class InconsistentDecomposition : public Error
{
public:
    using Error::Error;
};

class RankDeficient : public Error
{
public:
    RankDeficient(const std::string& what, int detected_rank)
        : Error(what), detected_rank_(detected_rank)
    {
    }
    int detected_rank() const noexcept { return detected_rank_; }

private:
    int detected_rank_;
};

class IllConditioned : public Error
{
public:
    IllConditioned(const std::string& what, double condition_number)
        : Error(what), condition_number_(condition_number)
    {
    }
    double condition_number() const noexcept { return condition_number_; }

private:
    double condition_number_;
};

/// Wraps a failure inside the estimation pipeline with the name of the
/// stage that raised it ("solve", "matrix_pencil", "ls_channels").
class EstimationError : public Error
{
public:
    EstimationError(std::string stage, const std::string& what)
        : Error(stage + ": " + what), stage_(std::move(stage))
    {
    }
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

} // namespace ufmc

#endif
