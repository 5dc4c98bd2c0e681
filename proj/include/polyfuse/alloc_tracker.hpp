#pragma once

#include <cstddef>
#include <cstdint>

/// Heap instrumentation for peak-allocation assertions. Linking the
/// polyfuse_alloctrack library replaces global operator new/delete with
/// counting versions; link it only into binaries that measure memory.
namespace polyfuse::alloctrack {

/// Zeroes the counters; call right before the region of interest.
void reset();
/// Largest single allocation since the last reset, in bytes.
std::size_t max_single_allocation_bytes();
/// Number of allocations since the last reset.
std::uint64_t allocation_count();

}  // namespace polyfuse::alloctrack
