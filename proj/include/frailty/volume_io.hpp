#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "frailty/error.hpp"

namespace frailty {

// Reader and writer for uncompressed single-file NIfTI-1 volumes
// (348-byte header, 4 extension bytes, raw voxels at offset 352).

enum class Datatype : std::int16_t { uint8 = 2, int16 = 4, float32 = 16 };
enum class ByteOrder { little, big };

struct Dims {
    int x = 0;
    int y = 0;
    int z = 0;

    std::size_t count() const noexcept
    {
        return static_cast<std::size_t>(x) * static_cast<std::size_t>(y) * static_cast<std::size_t>(z);
    }
    /// Linear index with x varying fastest.
    std::size_t index(int i, int j, int k) const noexcept
    {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(x) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(y) * static_cast<std::size_t>(k));
    }
    friend bool operator==(const Dims&, const Dims&) = default;
};

inline std::string to_string(const Dims& d)
{
    return std::to_string(d.x) + "x" + std::to_string(d.y) + "x" + std::to_string(d.z);
}

struct VolumeHeader {
    Dims dims;
    Datatype datatype = Datatype::int16;
    double scl_slope = 1.0;
    double scl_inter = 0.0;
    ByteOrder byte_order = ByteOrder::little;
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
};

/// HU values, x fastest.
struct Volume {
    Dims dims;
    std::vector<double> voxels;

    double at(int i, int j, int k) const { return voxels[dims.index(i, j, k)]; }
};

/// Integer-coded anatomy labels paired with a Volume.
struct LabelScheme {
    int kidney = 1;
    int tumor = 2;
    int cyst = 3;
};

struct SegmentationVolume {
    Dims dims;
    std::vector<std::uint8_t> labels;
    /// Voxel counts per label value 0..3 (background, kidney, tumor, cyst
    /// under the default scheme).
    std::array<std::size_t, 4> label_counts{};
    LabelScheme scheme;

    std::uint8_t at(int i, int j, int k) const { return labels[dims.index(i, j, k)]; }
    std::size_t tumor_voxels() const { return label_counts[static_cast<std::size_t>(scheme.tumor)]; }
};

namespace nifti {

inline constexpr std::size_t header_size = 348;
inline constexpr std::size_t data_offset = 352;

inline constexpr std::size_t off_dim = 40;
inline constexpr std::size_t off_datatype = 70;
inline constexpr std::size_t off_bitpix = 72;
inline constexpr std::size_t off_pixdim = 76;
inline constexpr std::size_t off_vox_offset = 108;
inline constexpr std::size_t off_scl_slope = 112;
inline constexpr std::size_t off_scl_inter = 116;
inline constexpr std::size_t off_magic = 344;

constexpr std::size_t bytes_per_voxel(Datatype t) noexcept
{
    switch (t) {
    case Datatype::uint8: return 1;
    case Datatype::int16: return 2;
    case Datatype::float32: return 4;
    }
    return 0;
}

inline bool host_is_little() noexcept { return std::endian::native == std::endian::little; }

template <class T>
T load(std::span<const std::byte> bytes, std::size_t offset, ByteOrder order)
{
    std::array<std::byte, sizeof(T)> raw;
    std::memcpy(raw.data(), bytes.data() + offset, sizeof(T));
    if ((order == ByteOrder::little) != host_is_little()) std::reverse(raw.begin(), raw.end());
    T v;
    std::memcpy(&v, raw.data(), sizeof(T));
    return v;
}

template <class T>
void store(std::vector<std::byte>& out, std::size_t offset, T value, ByteOrder order)
{
    std::array<std::byte, sizeof(T)> raw;
    std::memcpy(raw.data(), &value, sizeof(T));
    if ((order == ByteOrder::little) != host_is_little()) std::reverse(raw.begin(), raw.end());
    std::memcpy(out.data() + offset, raw.data(), sizeof(T));
}

} // namespace nifti

/// Decodes the fixed NIfTI-1 header fields used here. Byte order is whatever
/// makes sizeof_hdr read as 348.
inline VolumeHeader parse_nifti_header(std::span<const std::byte> bytes)
{
    using namespace nifti;
    if (bytes.size() < data_offset)
        throw Error(Errc::HeaderTooShort, std::to_string(bytes.size()) + " bytes, need " + std::to_string(data_offset));

    VolumeHeader h;
    if (load<std::int32_t>(bytes, 0, ByteOrder::little) == static_cast<std::int32_t>(header_size))
        h.byte_order = ByteOrder::little;
    else if (load<std::int32_t>(bytes, 0, ByteOrder::big) == static_cast<std::int32_t>(header_size))
        h.byte_order = ByteOrder::big;
    else
        throw Error(Errc::BadHeaderSize, "sizeof_hdr is not 348 in either byte order");

    const char* magic = reinterpret_cast<const char*>(bytes.data() + off_magic);
    if (!(magic[0] == 'n' && magic[1] == '+' && magic[2] == '1' && magic[3] == '\0'))
        throw Error(Errc::BadMagic, "expected \"n+1\"");

    const auto order = h.byte_order;
    const auto ndim = load<std::int16_t>(bytes, off_dim, order);
    if (ndim != 3) throw Error(Errc::BadDims, "dim[0] = " + std::to_string(ndim) + ", only 3D volumes are supported");
    std::array<int, 3> d{};
    for (std::size_t a = 0; a < 3; ++a) {
        d[a] = load<std::int16_t>(bytes, off_dim + 2 * (a + 1), order);
        if (d[a] < 1) throw Error(Errc::BadDims, "dim[" + std::to_string(a + 1) + "] = " + std::to_string(d[a]));
    }
    h.dims = {d[0], d[1], d[2]};

    const auto code = load<std::int16_t>(bytes, off_datatype, order);
    switch (code) {
    case 2: h.datatype = Datatype::uint8; break;
    case 4: h.datatype = Datatype::int16; break;
    case 16: h.datatype = Datatype::float32; break;
    default: throw Error(Errc::UnsupportedDatatype, "datatype code " + std::to_string(code));
    }

    const double slope = load<float>(bytes, off_scl_slope, order);
    const double inter = load<float>(bytes, off_scl_inter, order);
    if (!std::isfinite(slope) || !std::isfinite(inter))
        throw Error(Errc::NonFiniteValue, "scl_slope/scl_inter not finite");
    h.scl_slope = slope == 0.0 ? 1.0 : slope;
    h.scl_inter = inter;
    for (std::size_t a = 0; a < 3; ++a) {
        const double s = load<float>(bytes, off_pixdim + 4 * (a + 1), order);
        h.spacing[a] = std::isfinite(s) && s > 0.0 ? s : 1.0;
    }
    return h;
}

/// Maps the payload to HU: slope * stored + intercept.
inline Volume read_volume(const VolumeHeader& h, std::span<const std::byte> bytes)
{
    using namespace nifti;
    const std::size_t n = h.dims.count();
    const std::size_t bpv = bytes_per_voxel(h.datatype);
    const std::size_t available = bytes.size() > data_offset ? bytes.size() - data_offset : 0;
    if (n > available / bpv)
        throw Error(Errc::PayloadTruncated, "need " + std::to_string(n) + " voxels of " + std::to_string(bpv) +
                                                " bytes, have " + std::to_string(available) + " bytes");

    Volume v;
    v.dims = h.dims;
    v.voxels.resize(n);
    const auto payload = bytes.subspan(data_offset);
    for (std::size_t i = 0; i < n; ++i) {
        double stored = 0.0;
        switch (h.datatype) {
        case Datatype::uint8: stored = static_cast<double>(std::to_integer<std::uint8_t>(payload[i])); break;
        case Datatype::int16: stored = load<std::int16_t>(payload, 2 * i, h.byte_order); break;
        case Datatype::float32: stored = load<float>(payload, 4 * i, h.byte_order); break;
        }
        const double hu = h.scl_slope * stored + h.scl_inter;
        if (!std::isfinite(hu)) throw Error(Errc::NonFiniteValue, "voxel " + std::to_string(i) + " is not finite");
        v.voxels[i] = hu;
    }
    return v;
}

/// Serializes stored (pre-scaling) values with the given header. The
/// values are cast to the header's datatype.
inline std::vector<std::byte> encode_nifti(const VolumeHeader& h, std::span<const double> stored)
{
    using namespace nifti;
    const std::size_t n = h.dims.count();
    if (stored.size() != n) throw Error(Errc::LengthMismatch, "value count does not match dims");
    const auto order = h.byte_order;
    std::vector<std::byte> out(data_offset + n * bytes_per_voxel(h.datatype), std::byte{0});
    store<std::int32_t>(out, 0, static_cast<std::int32_t>(header_size), order);
    store<std::int16_t>(out, off_dim, 3, order);
    store<std::int16_t>(out, off_dim + 2, static_cast<std::int16_t>(h.dims.x), order);
    store<std::int16_t>(out, off_dim + 4, static_cast<std::int16_t>(h.dims.y), order);
    store<std::int16_t>(out, off_dim + 6, static_cast<std::int16_t>(h.dims.z), order);
    for (std::size_t a = 4; a < 8; ++a) store<std::int16_t>(out, off_dim + 2 * a, 1, order);
    store<std::int16_t>(out, off_datatype, static_cast<std::int16_t>(h.datatype), order);
    store<std::int16_t>(out, off_bitpix, static_cast<std::int16_t>(8 * bytes_per_voxel(h.datatype)), order);
    store<float>(out, off_pixdim, 1.0f, order);
    for (std::size_t a = 0; a < 3; ++a) store<float>(out, off_pixdim + 4 * (a + 1), static_cast<float>(h.spacing[a]), order);
    store<float>(out, off_vox_offset, static_cast<float>(data_offset), order);
    store<float>(out, off_scl_slope, static_cast<float>(h.scl_slope), order);
    store<float>(out, off_scl_inter, static_cast<float>(h.scl_inter), order);
    std::memcpy(out.data() + off_magic, "n+1\0", 4);

    for (std::size_t i = 0; i < n; ++i) {
        const double s = stored[i];
        switch (h.datatype) {
        case Datatype::uint8:
            out[data_offset + i] = static_cast<std::byte>(static_cast<std::uint8_t>(std::clamp(std::lround(s), 0L, 255L)));
            break;
        case Datatype::int16:
            store<std::int16_t>(out, data_offset + 2 * i, static_cast<std::int16_t>(std::clamp(std::lround(s), -32768L, 32767L)), order);
            break;
        case Datatype::float32:
            store<float>(out, data_offset + 4 * i, static_cast<float>(s), order);
            break;
        }
    }
    return out;
}

/// Serializes HU values, inverting the header's slope/intercept.
inline std::vector<std::byte> write_volume(const VolumeHeader& h, const Volume& v)
{
    if (!(h.dims == v.dims)) throw Error(Errc::ShapeMismatch, "header dims differ from volume dims");
    const double slope = h.scl_slope == 0.0 ? 1.0 : h.scl_slope;
    std::vector<double> stored(v.voxels.size());
    for (std::size_t i = 0; i < stored.size(); ++i) stored[i] = (v.voxels[i] - h.scl_inter) / slope;
    return encode_nifti(h, stored);
}

/// Types an integer-valued volume as a segmentation of `image`.
inline SegmentationVolume validate_segmentation(const Volume& seg, const Volume& image, const LabelScheme& scheme = {})
{
    if (!(seg.dims == image.dims))
        throw Error(Errc::ShapeMismatch, "segmentation " + to_string(seg.dims) + " vs image " + to_string(image.dims));
    SegmentationVolume out;
    out.dims = seg.dims;
    out.scheme = scheme;
    out.labels.resize(seg.voxels.size());
    for (std::size_t i = 0; i < seg.voxels.size(); ++i) {
        const double v = seg.voxels[i];
        const bool allowed = v == 0.0 || v == scheme.kidney || v == scheme.tumor || v == scheme.cyst;
        if (!allowed) throw Error(Errc::IllegalLabel, "voxel " + std::to_string(i) + " has label " + std::to_string(v));
        const auto label = static_cast<std::uint8_t>(v);
        out.labels[i] = label;
        if (label < out.label_counts.size()) ++out.label_counts[label];
    }
    if (out.tumor_voxels() == 0) throw Error(Errc::NoTumorVoxels, "segmentation has no tumor voxels");
    return out;
}

inline std::vector<std::byte> read_file_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<std::byte> out(buf.size());
    std::memcpy(out.data(), buf.data(), buf.size());
    return out;
}

inline Volume read_nifti_file(const std::filesystem::path& path)
{
    const auto bytes = read_file_bytes(path);
    return read_volume(parse_nifti_header(bytes), bytes);
}

struct CaseVolumes {
    Volume image;
    SegmentationVolume segmentation;
};

/// Reads `<dir>/imaging.nii` and `<dir>/segmentation.nii`.
inline CaseVolumes load_case_volumes(const std::filesystem::path& dir, const LabelScheme& scheme = {})
{
    auto image = read_nifti_file(dir / "imaging.nii");
    auto seg = read_nifti_file(dir / "segmentation.nii");
    auto typed = validate_segmentation(seg, image, scheme);
    return {std::move(image), std::move(typed)};
}

} // namespace frailty
