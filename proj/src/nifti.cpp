#include "hepar/nifti.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <system_error>

namespace hepar::nifti {

static_assert(std::endian::native == std::endian::little, "NIfTI I/O assumes a little-endian host");

namespace {

constexpr int kHeaderSize = 348;
constexpr int kDataOffset = 352;

struct GzCloser {
    void operator()(gzFile f) const noexcept { gzclose(f); }
};
using GzHandle = std::unique_ptr<std::remove_pointer_t<gzFile>, GzCloser>;

template <class T>
T get(const unsigned char* hdr, int offset) {
    T v;
    std::memcpy(&v, hdr + offset, sizeof(T));
    return v;
}

template <class T>
void put(unsigned char* hdr, int offset, T v) {
    std::memcpy(hdr + offset, &v, sizeof(T));
}

int bytes_per_voxel(short datatype) {
    switch (static_cast<DataType>(datatype)) {
        case DataType::UInt8: return 1;
        case DataType::Int16:
        case DataType::UInt16: return 2;
        case DataType::Int32:
        case DataType::Float32: return 4;
        case DataType::Float64: return 8;
    }
    return 0;
}

template <class T>
void decode(const std::vector<unsigned char>& raw, std::vector<float>& out, double slope, double inter) {
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) {
        T v;
        std::memcpy(&v, raw.data() + i * sizeof(T), sizeof(T));
        out[i] = static_cast<float>(slope * static_cast<double>(v) + inter);
    }
}

template <class T>
void decode_unscaled(const std::vector<unsigned char>& raw, std::vector<float>& out) {
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) {
        T v;
        std::memcpy(&v, raw.data() + i * sizeof(T), sizeof(T));
        out[i] = static_cast<float>(v);
    }
}

Mat3 quaternion_rotation(double b, double c, double d) {
    const double a = std::sqrt(std::max(0.0, 1.0 - (b * b + c * c + d * d)));
    return {{{a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)},
             {2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)},
             {2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b}}};
}

// Orientation from an affine's 3x3 part; columns must be orthogonal.
Mat3 direction_from_columns(const Mat3& m, const std::filesystem::path& path) {
    Mat3 dir{};
    std::array<Vec3, 3> cols{};
    for (int c = 0; c < 3; ++c) {
        Vec3 col{m[0][c], m[1][c], m[2][c]};
        const double n = norm(col);
        require(n > 0.0 && std::isfinite(n), ErrorKind::Format, "degenerate affine in " + path.string());
        cols[c] = (1.0 / n) * col;
    }
    for (int a = 0; a < 3; ++a)
        for (int b = a + 1; b < 3; ++b)
            require(std::abs(dot(cols[a], cols[b])) < 1e-4, ErrorKind::Unsupported,
                    "non-orthogonal (oblique sheared) affine in " + path.string());
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) dir[r][c] = cols[c][r];
    return dir;
}

std::string error_text(const std::filesystem::path& path) {
    return std::error_code(errno, std::generic_category()).message() + ": " + path.string();
}

}  // namespace

VoxelVolume read_volume(const std::filesystem::path& path) {
    GzHandle file(gzopen(path.c_str(), "rb"));
    require(file != nullptr, ErrorKind::Io, "cannot open " + error_text(path));
    gzbuffer(file.get(), 1 << 17);

    unsigned char hdr[kHeaderSize];
    const int got = gzread(file.get(), hdr, kHeaderSize);
    require(got == kHeaderSize, ErrorKind::Format, "file shorter than a NIfTI-1 header: " + path.string());

    const auto sizeof_hdr = get<std::int32_t>(hdr, 0);
    if (sizeof_hdr != kHeaderSize) {
        require(__builtin_bswap32(static_cast<std::uint32_t>(sizeof_hdr)) != kHeaderSize, ErrorKind::Unsupported,
                "big-endian NIfTI is not supported: " + path.string());
        fail(ErrorKind::Format, "not a NIfTI-1 header (sizeof_hdr) in " + path.string());
    }
    const char* magic = reinterpret_cast<const char*>(hdr + 344);
    if (std::memcmp(magic, "ni1\0", 4) == 0)
        fail(ErrorKind::Format, "detached-header NIfTI (ni1) is not supported: " + path.string());
    require(std::memcmp(magic, "n+1\0", 4) == 0, ErrorKind::Format, "bad NIfTI-1 magic in " + path.string());

    std::array<std::int16_t, 8> dim{};
    for (int i = 0; i < 8; ++i) dim[i] = get<std::int16_t>(hdr, 40 + 2 * i);
    require(dim[0] >= 1 && dim[0] <= 7, ErrorKind::Format, "invalid dim[0] in " + path.string());
    Grid grid;
    for (int a = 0; a < 3; ++a) {
        grid.dims[a] = a + 1 <= dim[0] ? dim[a + 1] : 1;
        require(grid.dims[a] > 0, ErrorKind::Format, "non-positive dimension in " + path.string());
    }
    for (int a = 4; a <= dim[0]; ++a)
        require(dim[a] == 1, ErrorKind::Unsupported, "4D and higher NIfTI volumes are not supported: " + path.string());

    const auto datatype = get<std::int16_t>(hdr, 70);
    const int bpv = bytes_per_voxel(datatype);
    require(bpv > 0, ErrorKind::Unsupported, "unsupported NIfTI datatype " + std::to_string(datatype));

    std::array<float, 8> pixdim{};
    for (int i = 0; i < 8; ++i) pixdim[i] = get<float>(hdr, 76 + 4 * i);
    for (int a = 0; a < 3; ++a) {
        const double s = a + 1 <= dim[0] ? std::abs(static_cast<double>(pixdim[a + 1])) : 1.0;
        grid.spacing[a] = (std::isfinite(s) && s > 0.0) ? s : 1.0;
    }

    const auto qform_code = get<std::int16_t>(hdr, 252);
    const auto sform_code = get<std::int16_t>(hdr, 254);
    if (sform_code > 0) {
        Mat3 m{};
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) m[r][c] = get<float>(hdr, 280 + 16 * r + 4 * c);
            grid.origin[r] = get<float>(hdr, 280 + 16 * r + 12);
        }
        grid.direction = direction_from_columns(m, path);
    } else if (qform_code > 0) {
        const double qfac = pixdim[0] < 0 ? -1.0 : 1.0;
        Mat3 r = quaternion_rotation(get<float>(hdr, 256), get<float>(hdr, 260), get<float>(hdr, 264));
        for (int row = 0; row < 3; ++row) r[row][2] *= qfac;
        grid.direction = r;
        grid.origin = {get<float>(hdr, 268), get<float>(hdr, 272), get<float>(hdr, 276)};
    }
    grid.validate();

    const double vox_offset = get<float>(hdr, 108);
    require(std::isfinite(vox_offset) && vox_offset >= kHeaderSize, ErrorKind::Format,
            "invalid vox_offset in " + path.string());
    const auto skip = static_cast<long>(vox_offset) - kHeaderSize;
    if (skip > 0) {
        std::vector<unsigned char> ext(static_cast<std::size_t>(skip));
        require(gzread(file.get(), ext.data(), static_cast<unsigned>(skip)) == skip, ErrorKind::Corruption,
                "truncated NIfTI header extension in " + path.string());
    }

    const std::size_t n = grid.voxel_count();
    std::vector<unsigned char> raw(n * static_cast<std::size_t>(bpv));
    std::size_t filled = 0;
    while (filled < raw.size()) {
        const auto chunk = static_cast<unsigned>(std::min<std::size_t>(raw.size() - filled, 1u << 30));
        const int r = gzread(file.get(), raw.data() + filled, chunk);
        require(r >= 0, ErrorKind::Corruption, "corrupt compressed stream in " + path.string());
        if (r == 0) break;
        filled += static_cast<std::size_t>(r);
    }
    require(filled == raw.size(), ErrorKind::Corruption,
            "truncated NIfTI payload in " + path.string() + " (" + std::to_string(filled) + " of " +
                std::to_string(raw.size()) + " bytes)");

    const double slope = get<float>(hdr, 112);
    const double inter = get<float>(hdr, 116);
    const bool scaled = slope != 0.0 && std::isfinite(slope) && std::isfinite(inter) && !(slope == 1.0 && inter == 0.0);

    std::vector<float> data(n);
    switch (static_cast<DataType>(datatype)) {
        case DataType::UInt8: scaled ? decode<std::uint8_t>(raw, data, slope, inter) : decode_unscaled<std::uint8_t>(raw, data); break;
        case DataType::Int16: scaled ? decode<std::int16_t>(raw, data, slope, inter) : decode_unscaled<std::int16_t>(raw, data); break;
        case DataType::UInt16: scaled ? decode<std::uint16_t>(raw, data, slope, inter) : decode_unscaled<std::uint16_t>(raw, data); break;
        case DataType::Int32: scaled ? decode<std::int32_t>(raw, data, slope, inter) : decode_unscaled<std::int32_t>(raw, data); break;
        case DataType::Float32: scaled ? decode<float>(raw, data, slope, inter) : decode_unscaled<float>(raw, data); break;
        case DataType::Float64: scaled ? decode<double>(raw, data, slope, inter) : decode_unscaled<double>(raw, data); break;
    }
    return VoxelVolume(std::move(grid), std::move(data));
}

LabelMask read_mask(const std::filesystem::path& path) {
    const VoxelVolume v = read_volume(path);
    std::vector<std::uint8_t> bits(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        require(v[i] == 0.0f || v[i] == 1.0f, ErrorKind::Validation, "mask values must be 0 or 1: " + path.string());
        bits[i] = v[i] == 1.0f ? 1 : 0;
    }
    return LabelMask(v.grid(), std::move(bits));
}

namespace {

template <class T>
void encode(std::span<const float> values, std::vector<unsigned char>& raw) {
    raw.resize(values.size() * sizeof(T));
    for (std::size_t i = 0; i < values.size(); ++i) {
        T v;
        if constexpr (std::is_integral_v<T>) {
            const double r = std::round(static_cast<double>(values[i]));
            require(r >= static_cast<double>(std::numeric_limits<T>::lowest()) &&
                        r <= static_cast<double>(std::numeric_limits<T>::max()),
                    ErrorKind::Contract, "value not representable in the requested NIfTI datatype");
            v = static_cast<T>(r);
        } else {
            v = static_cast<T>(values[i]);
        }
        std::memcpy(raw.data() + i * sizeof(T), &v, sizeof(T));
    }
}

void write_raw(const Grid& grid, DataType type, const std::vector<unsigned char>& payload,
               const std::filesystem::path& path) {
    unsigned char hdr[kDataOffset] = {};
    put<std::int32_t>(hdr, 0, kHeaderSize);
    put<char>(hdr, 38, 'r');
    put<std::int16_t>(hdr, 40, 3);
    for (int a = 0; a < 3; ++a) put<std::int16_t>(hdr, 42 + 2 * a, static_cast<std::int16_t>(grid.dims[a]));
    for (int a = 3; a < 7; ++a) put<std::int16_t>(hdr, 42 + 2 * a, 1);
    put<std::int16_t>(hdr, 70, static_cast<std::int16_t>(type));
    put<std::int16_t>(hdr, 72, static_cast<std::int16_t>(8 * bytes_per_voxel(static_cast<short>(type))));
    put<float>(hdr, 76, 1.0f);
    for (int a = 0; a < 3; ++a) put<float>(hdr, 80 + 4 * a, static_cast<float>(grid.spacing[a]));
    put<float>(hdr, 108, static_cast<float>(kDataOffset));
    put<float>(hdr, 112, 1.0f);
    put<float>(hdr, 116, 0.0f);
    put<unsigned char>(hdr, 123, 2);  // mm
    put<std::int16_t>(hdr, 254, 1);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c)
            put<float>(hdr, 280 + 16 * r + 4 * c, static_cast<float>(grid.direction[r][c] * grid.spacing[c]));
        put<float>(hdr, 280 + 16 * r + 12, static_cast<float>(grid.origin[r]));
    }
    std::memcpy(hdr + 344, "n+1\0", 4);

    const bool gz = path.extension() == ".gz";
    std::filesystem::path tmp = path;
    tmp += ".partial";
    {
        GzHandle file(gzopen(tmp.c_str(), gz ? "wb6" : "wbT"));
        require(file != nullptr, ErrorKind::Io, "cannot write " + error_text(tmp));
        bool ok = gzwrite(file.get(), hdr, kDataOffset) == kDataOffset;
        std::size_t done = 0;
        while (ok && done < payload.size()) {
            const auto chunk = static_cast<unsigned>(std::min<std::size_t>(payload.size() - done, 1u << 30));
            ok = gzwrite(file.get(), payload.data() + done, chunk) == static_cast<int>(chunk);
            done += chunk;
        }
        ok = (gzclose(file.release()) == Z_OK) && ok;
        if (!ok) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            fail(ErrorKind::Io, "failed writing " + path.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    require(!ec, ErrorKind::Io, "cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace

void write(const VoxelVolume& v, const std::filesystem::path& path, DataType type) {
    std::vector<unsigned char> payload;
    const auto values = v.data();
    switch (type) {
        case DataType::UInt8: encode<std::uint8_t>(values, payload); break;
        case DataType::Int16: encode<std::int16_t>(values, payload); break;
        case DataType::UInt16: encode<std::uint16_t>(values, payload); break;
        case DataType::Int32: encode<std::int32_t>(values, payload); break;
        case DataType::Float32: encode<float>(values, payload); break;
        case DataType::Float64: encode<double>(values, payload); break;
    }
    write_raw(v.grid(), type, payload, path);
}

void write(const LabelMask& m, const std::filesystem::path& path) {
    const auto bits = m.data();
    write_raw(m.grid(), DataType::UInt8, std::vector<unsigned char>(bits.begin(), bits.end()), path);
}

}  // namespace hepar::nifti
