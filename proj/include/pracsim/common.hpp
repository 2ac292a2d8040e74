#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pracsim {

// DRAM command-clock cycles.
using Tick = std::uint64_t;

inline constexpr Tick kNever = ~Tick{0};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BoundsError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// Raised when a command is not legal for the current bank state. The message
// names the violated rule.
struct ProtocolError : std::logic_error {
  using std::logic_error::logic_error;
};

struct ParseError : std::runtime_error {
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

constexpr bool is_pow2(std::uint64_t v) noexcept { return v != 0 && (v & (v - 1)) == 0; }

constexpr unsigned log2_exact(std::uint64_t v) noexcept {
  unsigned n = 0;
  while (v > 1) {
    v >>= 1;
    ++n;
  }
  return n;
}

constexpr std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) noexcept { return (a + b - 1) / b; }

}  // namespace pracsim
