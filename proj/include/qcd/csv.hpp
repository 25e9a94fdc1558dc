#pragma once

#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace qcd {

// Shortest round-trip decimal form of a double, locale-independent, so CSV
// and JSON-lines outputs are byte-stable across runs and platforms.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, res.ptr);
}

inline std::string format_int(long long v) {
  char buf[24];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc()) throw std::runtime_error("format_int: conversion failed");
  return std::string(buf, res.ptr);
}

}  // namespace qcd
