#include "polyfuse/alloc_tracker.hpp"

#include <atomic>
#include <cstdlib>
#include <new>

namespace {

std::atomic<std::size_t> g_max_single{0};
std::atomic<std::uint64_t> g_count{0};

void* tracked_alloc(std::size_t size) {
    void* p = std::malloc(size == 0 ? 1 : size);
    if (p == nullptr) throw std::bad_alloc();
    g_count.fetch_add(1, std::memory_order_relaxed);
    std::size_t prev = g_max_single.load(std::memory_order_relaxed);
    while (prev < size &&
           !g_max_single.compare_exchange_weak(prev, size, std::memory_order_relaxed)) {
    }
    return p;
}

}  // namespace

namespace polyfuse::alloctrack {

void reset() {
    g_max_single.store(0, std::memory_order_relaxed);
    g_count.store(0, std::memory_order_relaxed);
}

std::size_t max_single_allocation_bytes() {
    return g_max_single.load(std::memory_order_relaxed);
}

std::uint64_t allocation_count() { return g_count.load(std::memory_order_relaxed); }

}  // namespace polyfuse::alloctrack

void* operator new(std::size_t size) { return tracked_alloc(size); }
void* operator new[](std::size_t size) { return tracked_alloc(size); }

void* operator new(std::size_t size, const std::nothrow_t&) noexcept {
    try {
        return tracked_alloc(size);
    } catch (...) {
        return nullptr;
    }
}
void* operator new[](std::size_t size, const std::nothrow_t&) noexcept {
    try {
        return tracked_alloc(size);
    } catch (...) {
        return nullptr;
    }
}

void operator delete(void* p) noexcept { std::free(p); }
void operator delete[](void* p) noexcept { std::free(p); }
void operator delete(void* p, std::size_t) noexcept { std::free(p); }
void operator delete[](void* p, std::size_t) noexcept { std::free(p); }
void operator delete(void* p, const std::nothrow_t&) noexcept { std::free(p); }
void operator delete[](void* p, const std::nothrow_t&) noexcept { std::free(p); }
