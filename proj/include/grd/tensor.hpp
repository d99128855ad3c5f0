#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <new>
#include <vector>

namespace grd {

/// 64-byte aligned allocator. Keeping every tensor buffer on the same SIMD
/// phase makes Eigen's vectorized reductions take identical code paths for
/// identical shapes, which the bitwise reproducibility and causality
/// contracts rely on (unaligned buffers get value-identical but
/// rounding-different peeling).
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const {
        return true;
    }
    template <typename U>
    bool operator!=(const AlignedAllocator<U>&) const {
        return false;
    }
};

using AlignedVector = std::vector<double, AlignedAllocator<double>>;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

/// Dense row-major matrix of 64-bit reals. All network math runs through
/// Eigen maps over this storage.
struct Tensor2 {
    int rows = 0;
    int cols = 0;
    AlignedVector data;

    Tensor2() = default;
    Tensor2(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    MatrixMap mat() { return MatrixMap(data.data(), rows, cols); }
    ConstMatrixMap mat() const { return ConstMatrixMap(data.data(), rows, cols); }

    void set_zero() { std::fill(data.begin(), data.end(), 0.0); }
    std::size_t size() const { return data.size(); }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

}  // namespace grd
