#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace tactex {

/// SplitMix64 finalizer.
std::uint64_t splitmix64(std::uint64_t x);

/// Child seed for a tuple of indices under a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path);

/// Uniform (Haar) random rotation.
Eigen::Matrix3d haar_rotation(std::mt19937_64& rng);

/// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

/// Runs body(i) for i in [0, n) on up to `threads` workers. The first
/// exception thrown by any task is rethrown after all workers stop.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

}  // namespace tactex
