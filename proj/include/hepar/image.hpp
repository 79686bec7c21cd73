#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "hepar/error.hpp"
#include "hepar/geometry.hpp"

namespace hepar {

using Index3 = std::array<int, 3>;

/// Physical layout of a voxel grid. World position of voxel (i,j,k) is
/// origin + direction * (spacing ⊙ (i,j,k)); direction columns are the
/// orthonormal axis directions.
struct Grid {
    Index3 dims{1, 1, 1};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};
    Mat3 direction = identity3();

    [[nodiscard]] std::size_t voxel_count() const noexcept {
        return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
               static_cast<std::size_t>(dims[2]);
    }

    [[nodiscard]] std::size_t offset(int i, int j, int k) const noexcept {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(dims[0]) *
                   (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(k));
    }

    [[nodiscard]] bool contains(int i, int j, int k) const noexcept {
        return i >= 0 && j >= 0 && k >= 0 && i < dims[0] && j < dims[1] && k < dims[2];
    }

    /// World coordinate (mm) of a continuous voxel index.
    [[nodiscard]] Vec3 world(const Vec3& index) const noexcept {
        const Vec3 scaled{index[0] * spacing[0], index[1] * spacing[1], index[2] * spacing[2]};
        return origin + direction * scaled;
    }

    [[nodiscard]] Vec3 world(int i, int j, int k) const noexcept {
        return world(Vec3{double(i), double(j), double(k)});
    }

    /// Continuous voxel index of a world point.
    [[nodiscard]] Vec3 index(const Vec3& world_point) const noexcept {
        const Vec3 local = transpose(direction) * (world_point - origin);
        return {local[0] / spacing[0], local[1] / spacing[1], local[2] / spacing[2]};
    }

    /// World position of the grid's geometric center.
    [[nodiscard]] Vec3 center() const noexcept {
        return world(Vec3{(dims[0] - 1) / 2.0, (dims[1] - 1) / 2.0, (dims[2] - 1) / 2.0});
    }

    /// Throws Validation when dims/spacing/origin/direction are unusable.
    void validate() const;

    /// Equality of dims exactly and of the geometry to `tol` mm.
    [[nodiscard]] bool same_as(const Grid& other, double tol = 1e-5) const noexcept;
};

template <class T>
class Image {
public:
    using value_type = T;

    Image() = default;

    explicit Image(Grid grid, T fill = T{}) : grid_(std::move(grid)) {
        grid_.validate();
        data_.assign(grid_.voxel_count(), fill);
    }

    Image(Grid grid, std::vector<T> data) : grid_(std::move(grid)), data_(std::move(data)) {
        grid_.validate();
        require(data_.size() == grid_.voxel_count(), ErrorKind::Contract,
                "image data length " + std::to_string(data_.size()) + " does not match grid voxel count " +
                    std::to_string(grid_.voxel_count()));
        if constexpr (std::is_same_v<T, std::uint8_t>) {
            for (const auto v : data_)
                require(v <= 1, ErrorKind::Validation, "label mask values must be 0 or 1");
        }
    }

    [[nodiscard]] const Grid& grid() const noexcept { return grid_; }
    [[nodiscard]] const Index3& dims() const noexcept { return grid_.dims; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }

    [[nodiscard]] std::span<const T> data() const noexcept { return data_; }
    [[nodiscard]] std::span<T> data() noexcept { return data_; }

    [[nodiscard]] T operator()(int i, int j, int k) const noexcept { return data_[grid_.offset(i, j, k)]; }
    [[nodiscard]] T& operator()(int i, int j, int k) noexcept { return data_[grid_.offset(i, j, k)]; }

    [[nodiscard]] T operator[](std::size_t n) const noexcept { return data_[n]; }
    [[nodiscard]] T& operator[](std::size_t n) noexcept { return data_[n]; }

    friend bool operator==(const Image& a, const Image& b) {
        return a.grid_.same_as(b.grid_, 0.0) && a.data_ == b.data_;
    }

private:
    Grid grid_;
    std::vector<T> data_;
};

/// 3D scalar volume; float internally regardless of on-disk type.
using VoxelVolume = Image<float>;
/// Binary mask, values exactly 0 or 1.
using LabelMask = Image<std::uint8_t>;

/// Inclusive voxel box.
struct VoxelBox {
    Index3 lo{};
    Index3 hi{};

    [[nodiscard]] Index3 extent() const noexcept {
        return {hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1};
    }
    friend bool operator==(const VoxelBox&, const VoxelBox&) = default;
};

/// Tightest box around the foreground; nullopt for an all-zero mask.
std::optional<VoxelBox> bounding_box(const LabelMask& mask);

/// Grow a box by `margin` voxels per side, clipped to the grid.
VoxelBox expand_box(const VoxelBox& box, int margin, const Index3& dims);

/// Copy a sub-box into a new image whose geometry keeps world positions.
template <class T>
Image<T> crop(const Image<T>& image, const VoxelBox& box);

std::size_t foreground_count(const LabelMask& mask);

}  // namespace hepar
