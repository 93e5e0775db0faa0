#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "frailty/error.hpp"
#include "frailty/rng.hpp"
#include "frailty/volume_io.hpp"

namespace frailty {

enum class Plane { axial, coronal, sagittal };

constexpr std::string_view plane_name(Plane p) noexcept
{
    switch (p) {
    case Plane::axial: return "axial";
    case Plane::coronal: return "coronal";
    case Plane::sagittal: return "sagittal";
    }
    return "?";
}

/// One 2D slice with HU, tumor-mask, and kidney-mask channels.
///
/// Pixel (u, v) lives at `u + width * v`. The in-plane axes are
/// (x, y) for axial, (x, z) for coronal, and (y, z) for sagittal.
struct View {
    Plane plane = Plane::axial;
    int index = 0;
    int width = 0;
    int height = 0;
    std::vector<double> hu;
    std::vector<std::uint8_t> tumor;
    std::vector<std::uint8_t> kidney;
    std::size_t tumor_voxels = 0;

    std::size_t pixels() const noexcept { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
};

struct ViewSet {
    std::string case_id;
    std::vector<View> views;
    std::vector<double> weights;
};

/// Normalizes per-view tumor counts into one distribution over all views.
inline std::vector<double> tumor_fraction_weights(std::span<const std::size_t> tumor_counts)
{
    std::size_t total = 0;
    for (auto c : tumor_counts) total += c;
    if (total == 0) throw Error(Errc::NoTumorVoxels, "no view contains tumor voxels");
    std::vector<double> w(tumor_counts.size());
    const double denom = static_cast<double>(total);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<double>(tumor_counts[i]) / denom;
    return w;
}

inline std::vector<double> tumor_fraction_weights(std::span<const View> views)
{
    std::vector<std::size_t> counts;
    counts.reserve(views.size());
    for (const auto& v : views) counts.push_back(v.tumor_voxels);
    return tumor_fraction_weights(counts);
}

namespace detail {

inline View make_view(const Volume& image, const SegmentationVolume& seg, Plane plane, int index)
{
    const Dims d = image.dims;
    View v;
    v.plane = plane;
    v.index = index;
    switch (plane) {
    case Plane::axial: v.width = d.x; v.height = d.y; break;
    case Plane::coronal: v.width = d.x; v.height = d.z; break;
    case Plane::sagittal: v.width = d.y; v.height = d.z; break;
    }
    const std::size_t n = v.pixels();
    v.hu.resize(n);
    v.tumor.resize(n);
    v.kidney.resize(n);
    const auto tumor_label = static_cast<std::uint8_t>(seg.scheme.tumor);
    const auto kidney_label = static_cast<std::uint8_t>(seg.scheme.kidney);
    for (int b = 0; b < v.height; ++b) {
        for (int a = 0; a < v.width; ++a) {
            std::size_t src = 0;
            switch (plane) {
            case Plane::axial: src = d.index(a, b, index); break;
            case Plane::coronal: src = d.index(a, index, b); break;
            case Plane::sagittal: src = d.index(index, a, b); break;
            }
            const std::size_t dst = static_cast<std::size_t>(a) + static_cast<std::size_t>(v.width) * static_cast<std::size_t>(b);
            const auto label = seg.labels[src];
            v.hu[dst] = image.voxels[src];
            v.tumor[dst] = label == tumor_label ? 1 : 0;
            v.kidney[dst] = label == kidney_label ? 1 : 0;
            v.tumor_voxels += v.tumor[dst];
        }
    }
    return v;
}

} // namespace detail

/// Every slice of every plane, ordered axial, coronal, sagittal, then by
/// slice index, with tumor-fraction weights.
inline ViewSet extract_views(const Volume& image, const SegmentationVolume& seg, std::string case_id = {})
{
    if (!(image.dims == seg.dims))
        throw Error(Errc::ShapeMismatch, "segmentation " + to_string(seg.dims) + " vs image " + to_string(image.dims));
    ViewSet set;
    set.case_id = std::move(case_id);
    const Dims d = image.dims;
    set.views.reserve(static_cast<std::size_t>(d.x + d.y + d.z));
    for (int k = 0; k < d.z; ++k) set.views.push_back(detail::make_view(image, seg, Plane::axial, k));
    for (int j = 0; j < d.y; ++j) set.views.push_back(detail::make_view(image, seg, Plane::coronal, j));
    for (int i = 0; i < d.x; ++i) set.views.push_back(detail::make_view(image, seg, Plane::sagittal, i));
    set.weights = tumor_fraction_weights(set.views);
    return set;
}

/// Draws `n` view indices with replacement from the weight distribution.
inline std::vector<std::size_t> sample_views(std::span<const double> weights, std::size_t n, std::uint64_t seed)
{
    if (n == 0) throw Error(Errc::ZeroSampleCount, "sample count must be positive");
    if (weights.empty()) throw Error(Errc::EmptyInput, "no views to sample");
    std::vector<double> cumulative(weights.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        cumulative[i] = acc;
    }
    if (!(acc > 0.0)) throw Error(Errc::NoTumorVoxels, "all view weights are zero");

    Rng rng(seed);
    std::vector<std::size_t> draws(n);
    for (auto& out : draws) {
        const double u = rng.uniform() * acc;
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        auto idx = static_cast<std::size_t>(it - cumulative.begin());
        if (idx >= weights.size()) idx = weights.size() - 1;
        // never land on a zero-weight view through rounding at a boundary
        while (weights[idx] <= 0.0 && idx > 0) --idx;
        while (weights[idx] <= 0.0 && idx + 1 < weights.size()) ++idx;
        out = idx;
    }
    return draws;
}

inline std::vector<std::size_t> sample_views(const ViewSet& set, std::size_t n, std::uint64_t seed)
{
    return sample_views(set.weights, n, seed);
}

/// Weighted mean of per-view predictions.
///
/// Terms are summed in a canonical order (sorted by weight, then value) so
/// the result is bit-identical under any joint permutation of the inputs,
/// and accumulated as offsets from the smallest contributing prediction so a
/// constant input comes back exactly.
inline double aggregate_predictions(std::span<const double> preds, std::span<const double> weights)
{
    if (preds.size() != weights.size())
        throw Error(Errc::LengthMismatch, std::to_string(preds.size()) + " predictions vs " + std::to_string(weights.size()) + " weights");
    if (preds.empty()) throw Error(Errc::EmptyInput, "no predictions to aggregate");

    std::vector<std::pair<double, double>> terms;
    terms.reserve(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (weights[i] != 0.0) terms.emplace_back(weights[i], preds[i]);
    if (terms.empty()) throw Error(Errc::EmptyInput, "all weights are zero");
    std::sort(terms.begin(), terms.end());

    double lo = terms.front().second;
    double hi = lo;
    for (const auto& [w, p] : terms) {
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    double weight_sum = 0.0;
    double offset = 0.0;
    for (const auto& [w, p] : terms) {
        weight_sum += w;
        offset += w * (p - lo);
    }
    return std::clamp(lo + offset / weight_sum, lo, hi);
}

} // namespace frailty
