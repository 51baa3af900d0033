#ifndef SRVSIM_COMMON_HPP
#define SRVSIM_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace srvsim
{

using Addr = std::uint64_t;
using Tick = std::uint64_t;
using Word = std::int64_t;

/// Base of every error the simulator raises.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class SyntaxError : public Error
{
public:
    SyntaxError(int line, int column, const std::string& what)
        : Error("syntax error at " + std::to_string(line) + ":" + std::to_string(column) + ": " + what)
        , line_(line)
        , column_(column)
    {
    }

    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }

private:
    int line_;
    int column_;
};

class ValidationError : public Error
{
public:
    using Error::Error;
};

class CapacityError : public Error
{
public:
    using Error::Error;
};

class OutOfBounds : public Error
{
public:
    using Error::Error;
};

class UnsupportedPattern : public Error
{
public:
    using Error::Error;
};

class ReplayBudgetExceeded : public Error
{
public:
    using Error::Error;
};

class NoKnee : public Error
{
public:
    using Error::Error;
};

class ConfigError : public Error
{
public:
    using Error::Error;
};

constexpr Addr align_up(Addr value, Addr alignment) noexcept
{
    return (value + alignment - 1) / alignment * alignment;
}

constexpr bool is_power_of_two(std::uint64_t v) noexcept
{
    return v != 0 && (v & (v - 1)) == 0;
}

} // namespace srvsim

#endif
