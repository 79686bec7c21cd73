#include "hepar/image.hpp"

#include <algorithm>
#include <cmath>

namespace hepar {

void Grid::validate() const {
    for (int a = 0; a < 3; ++a) {
        require(dims[a] > 0, ErrorKind::Validation, "grid dims must be positive");
        require(std::isfinite(spacing[a]) && spacing[a] > 0.0, ErrorKind::Validation,
                "grid spacing must be finite and positive");
        require(std::isfinite(origin[a]), ErrorKind::Validation, "grid origin must be finite");
    }
    const Mat3 gram = transpose(direction) * direction;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            require(std::abs(gram[i][j] - (i == j ? 1.0 : 0.0)) < 1e-4, ErrorKind::Validation,
                    "grid direction matrix must be orthonormal");
}

bool Grid::same_as(const Grid& other, double tol) const noexcept {
    if (dims != other.dims) return false;
    for (int i = 0; i < 3; ++i) {
        if (std::abs(spacing[i] - other.spacing[i]) > tol) return false;
        if (std::abs(origin[i] - other.origin[i]) > tol) return false;
        for (int j = 0; j < 3; ++j)
            if (std::abs(direction[i][j] - other.direction[i][j]) > std::max(tol, 1e-9)) return false;
    }
    return true;
}

std::optional<VoxelBox> bounding_box(const LabelMask& mask) {
    const auto& d = mask.dims();
    VoxelBox box{{d[0], d[1], d[2]}, {-1, -1, -1}};
    bool any = false;
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i) {
                if (!mask(i, j, k)) continue;
                any = true;
                box.lo = {std::min(box.lo[0], i), std::min(box.lo[1], j), std::min(box.lo[2], k)};
                box.hi = {std::max(box.hi[0], i), std::max(box.hi[1], j), std::max(box.hi[2], k)};
            }
    if (!any) return std::nullopt;
    return box;
}

VoxelBox expand_box(const VoxelBox& box, int margin, const Index3& dims) {
    VoxelBox out;
    for (int a = 0; a < 3; ++a) {
        out.lo[a] = std::max(0, box.lo[a] - margin);
        out.hi[a] = std::min(dims[a] - 1, box.hi[a] + margin);
    }
    return out;
}

template <class T>
Image<T> crop(const Image<T>& image, const VoxelBox& box) {
    Grid g = image.grid();
    g.dims = box.extent();
    g.origin = image.grid().world(box.lo[0], box.lo[1], box.lo[2]);
    std::vector<T> data;
    data.reserve(g.voxel_count());
    for (int k = box.lo[2]; k <= box.hi[2]; ++k)
        for (int j = box.lo[1]; j <= box.hi[1]; ++j)
            for (int i = box.lo[0]; i <= box.hi[0]; ++i) data.push_back(image(i, j, k));
    return Image<T>(std::move(g), std::move(data));
}

template Image<float> crop(const Image<float>&, const VoxelBox&);
template Image<std::uint8_t> crop(const Image<std::uint8_t>&, const VoxelBox&);

std::size_t foreground_count(const LabelMask& mask) {
    return static_cast<std::size_t>(std::count(mask.data().begin(), mask.data().end(), std::uint8_t{1}));
}

}  // namespace hepar
