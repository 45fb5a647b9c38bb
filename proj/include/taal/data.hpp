#pragma once

// Dataset handling: synthetic segmentation task generator, slice pipeline
// for on-disk volumes (resample -> percentile-normalize -> crop/pad ->
// resize), subject-grouped splits, and labeled/unlabeled pool bookkeeping.
//
// On-disk format: one directory per subject holding raw little-endian
// arrays (image: float32, mask: uint8) with JSON sidecars giving shape,
// spacing, dtype and role, plus a top-level manifest with a content hash.
//
// The 99th-percentile is the upper nearest-rank order statistic. That
// choice makes the normalization exactly idempotent: the percentile of an
// already-normalized volume is exactly 1.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "taal/rng.hpp"
#include "taal/tensor.hpp"

namespace taal {

struct SegSample {
    Image<float> image;
    Mask mask;
    std::string subject_id;
    int slice_index = 0;
};

// ---------------------------------------------------------------------------
// synthetic task
// ---------------------------------------------------------------------------

struct SyntheticConfig {
    int size = 64;
    int classes = 4;  // background + ellipse + rectangle + ring
    int subjects = 60;
    int slices_per_subject = 4;
    double noise = 0.05;                 // additive Gaussian intensity noise
    double small_structure_prob = 0.25;  // chance the ellipse is apical-like (area < 2%)
    std::array<double, 4> bands = {0.10, 0.40, 0.65, 0.90};
};

namespace detail {

inline bool region_free(const Mask& m, const std::vector<std::pair<int, int>>& px) {
    for (auto [y, x] : px) {
        if (y < 0 || y >= m.h || x < 0 || x >= m.w) return false;
        if (m.at(y, x) != 0) return false;
    }
    return true;
}

inline std::vector<std::pair<int, int>> ellipse_pixels(int cy, int cx, double ry, double rx, int size) {
    std::vector<std::pair<int, int>> out;
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - ry)));
    const int y1 = std::min(size - 1, static_cast<int>(std::ceil(cy + ry)));
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - rx)));
    const int x1 = std::min(size - 1, static_cast<int>(std::ceil(cx + rx)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double dy = (y - cy) / ry, dx = (x - cx) / rx;
            if (dy * dy + dx * dx <= 1.0) out.emplace_back(y, x);
        }
    return out;
}

inline std::vector<std::pair<int, int>> ring_pixels(int cy, int cx, double ro, double ri, int size) {
    std::vector<std::pair<int, int>> out;
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - ro)));
    const int y1 = std::min(size - 1, static_cast<int>(std::ceil(cy + ro)));
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - ro)));
    const int x1 = std::min(size - 1, static_cast<int>(std::ceil(cx + ro)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double d2 = double(y - cy) * (y - cy) + double(x - cx) * (x - cx);
            if (d2 <= ro * ro && d2 >= ri * ri) out.emplace_back(y, x);
        }
    return out;
}

inline std::vector<std::pair<int, int>> rect_pixels(int y0, int x0, int hh, int ww, int size) {
    std::vector<std::pair<int, int>> out;
    for (int y = y0; y < std::min(size, y0 + hh); ++y)
        for (int x = x0; x < std::min(size, x0 + ww); ++x) out.emplace_back(y, x);
    return out;
}

}  // namespace detail

/// Deterministic per seed. Shapes are placed without overlap, with bounded
/// retries; a shape that cannot be placed is skipped.
inline std::vector<SegSample> generate_synthetic(const SyntheticConfig& cfg, uint64_t seed) {
    if (cfg.classes != 4) throw std::invalid_argument("generate_synthetic: generator draws 4 classes");
    std::vector<SegSample> samples;
    samples.reserve(static_cast<size_t>(cfg.subjects) * cfg.slices_per_subject);

    const int s = cfg.size;
    int global = 0;
    for (int subj = 0; subj < cfg.subjects; ++subj) {
        char sid[16];
        std::snprintf(sid, sizeof sid, "subj%04d", subj);
        for (int z = 0; z < cfg.slices_per_subject; ++z, ++global) {
            Rng rng = stream(seed, "synthetic-sample", static_cast<uint64_t>(global));
            SegSample sample;
            sample.subject_id = sid;
            sample.slice_index = z;
            sample.mask = Mask(s, s, 0);
            sample.image = Image<float>(s, s, static_cast<float>(cfg.bands[0]));

            constexpr int kRetries = 20;
            // ellipse, class 1 (sometimes apical-like small)
            {
                const bool small = rng.bernoulli(cfg.small_structure_prob);
                for (int attempt = 0; attempt < kRetries; ++attempt) {
                    const double lo = small ? 0.030 : 0.080, hi = small ? 0.055 : 0.180;
                    const double ry = rng.uniform(lo * s, hi * s), rx = rng.uniform(lo * s, hi * s);
                    const int cy = rng.uniform_int(static_cast<int>(ry) + 1, s - 2 - static_cast<int>(ry));
                    const int cx = rng.uniform_int(static_cast<int>(rx) + 1, s - 2 - static_cast<int>(rx));
                    auto px = detail::ellipse_pixels(cy, cx, ry, rx, s);
                    if (!px.empty() && detail::region_free(sample.mask, px)) {
                        for (auto [y, x] : px) sample.mask.at(y, x) = 1;
                        break;
                    }
                }
            }
            // rectangle, class 2
            for (int attempt = 0; attempt < kRetries; ++attempt) {
                const int hh = rng.uniform_int(static_cast<int>(0.10 * s), static_cast<int>(0.28 * s));
                const int ww = rng.uniform_int(static_cast<int>(0.10 * s), static_cast<int>(0.28 * s));
                const int y0 = rng.uniform_int(1, s - hh - 2);
                const int x0 = rng.uniform_int(1, s - ww - 2);
                auto px = detail::rect_pixels(y0, x0, hh, ww, s);
                if (!px.empty() && detail::region_free(sample.mask, px)) {
                    for (auto [y, x] : px) sample.mask.at(y, x) = 2;
                    break;
                }
            }
            // ring, class 3
            for (int attempt = 0; attempt < kRetries; ++attempt) {
                const double ro = rng.uniform(0.090 * s, 0.170 * s);
                const double ri = 0.55 * ro;
                const int cy = rng.uniform_int(static_cast<int>(ro) + 1, s - 2 - static_cast<int>(ro));
                const int cx = rng.uniform_int(static_cast<int>(ro) + 1, s - 2 - static_cast<int>(ro));
                auto px = detail::ring_pixels(cy, cx, ro, ri, s);
                if (!px.empty() && detail::region_free(sample.mask, px)) {
                    for (auto [y, x] : px) sample.mask.at(y, x) = 3;
                    break;
                }
            }

            for (int y = 0; y < s; ++y)
                for (int x = 0; x < s; ++x)
                    sample.image.at(y, x) = static_cast<float>(cfg.bands[sample.mask.at(y, x)]);
            if (cfg.noise > 0.0) {
                Rng noise = stream(seed, "synthetic-noise", static_cast<uint64_t>(global));
                for (auto& px : sample.image.v) px += static_cast<float>(noise.normal(0.0, cfg.noise));
            }
            samples.push_back(std::move(sample));
        }
    }
    return samples;
}

// ---------------------------------------------------------------------------
// splits
// ---------------------------------------------------------------------------

struct SplitSpec {
    std::vector<int> train, val, test;  // global sample indices, each sorted
};

/// Subjects are held out whole for the test split. Validation is a fixed
/// per-image random subset of the non-test images, selected once per seed.
inline SplitSpec make_split(const std::vector<SegSample>& samples, int val_images,
                            double test_subject_fraction, uint64_t seed) {
    std::vector<std::string> subject_order;
    std::map<std::string, std::vector<int>> by_subject;
    for (size_t i = 0; i < samples.size(); ++i) {
        auto [it, inserted] = by_subject.try_emplace(samples[i].subject_id);
        if (inserted) subject_order.push_back(samples[i].subject_id);
        it->second.push_back(static_cast<int>(i));
    }

    Rng rng = stream(seed, "split-subjects");
    std::vector<int> perm(subject_order.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
    for (size_t i = 0; i + 1 < perm.size(); ++i) {
        size_t j = i + rng.bits() % (perm.size() - i);
        std::swap(perm[i], perm[j]);
    }

    const int n_test_subjects =
        std::max(1, static_cast<int>(std::lround(test_subject_fraction * static_cast<double>(subject_order.size()))));

    SplitSpec split;
    std::vector<int> pool;
    for (size_t r = 0; r < perm.size(); ++r) {
        const auto& ids = by_subject[subject_order[static_cast<size_t>(perm[r])]];
        auto& dst = (static_cast<int>(r) < n_test_subjects) ? split.test : pool;
        dst.insert(dst.end(), ids.begin(), ids.end());
    }
    std::sort(split.test.begin(), split.test.end());
    std::sort(pool.begin(), pool.end());

    if (val_images > static_cast<int>(pool.size()))
        throw std::invalid_argument("make_split: val_images exceeds the non-test pool");
    Rng vrng = stream(seed, "split-validation");
    std::vector<int> vsel = vrng.sample_without_replacement(static_cast<int>(pool.size()), val_images);
    std::vector<uint8_t> is_val(pool.size(), 0);
    for (int p : vsel) is_val[static_cast<size_t>(p)] = 1;
    for (size_t p = 0; p < pool.size(); ++p) (is_val[p] ? split.val : split.train).push_back(pool[p]);
    return split;
}

// ---------------------------------------------------------------------------
// labeled / unlabeled pools
// ---------------------------------------------------------------------------

struct PoolPartition {
    std::vector<int> labeled;    // D_L, sorted sample indices
    std::vector<int> unlabeled;  // D_U, sorted sample indices
    std::vector<std::pair<int, int>> history;  // (cycle, acquired index)

    static PoolPartition initial(const std::vector<int>& train_indices, int n_labeled, uint64_t seed) {
        if (n_labeled > static_cast<int>(train_indices.size()))
            throw std::invalid_argument("initial_partition: n_labeled exceeds the pool");
        Rng rng = stream(seed, "initial-labeled");
        std::vector<int> pick =
            rng.sample_without_replacement(static_cast<int>(train_indices.size()), n_labeled);
        PoolPartition part;
        std::vector<uint8_t> chosen(train_indices.size(), 0);
        for (int p : pick) chosen[static_cast<size_t>(p)] = 1;
        for (size_t i = 0; i < train_indices.size(); ++i)
            (chosen[i] ? part.labeled : part.unlabeled).push_back(train_indices[i]);
        return part;
    }

    /// Value-semantic acquisition: returns a new partition, history appended.
    PoolPartition acquire(const std::vector<int>& indices, int cycle) const {
        PoolPartition next = *this;
        for (int idx : indices) {
            if (std::binary_search(next.labeled.begin(), next.labeled.end(), idx))
                throw std::invalid_argument("acquire: double acquisition of index " + std::to_string(idx));
            auto it = std::lower_bound(next.unlabeled.begin(), next.unlabeled.end(), idx);
            if (it == next.unlabeled.end() || *it != idx)
                throw std::invalid_argument("acquire: index " + std::to_string(idx) + " is not in the unlabeled pool");
            next.unlabeled.erase(it);
            next.labeled.insert(std::lower_bound(next.labeled.begin(), next.labeled.end(), idx), idx);
            next.history.emplace_back(cycle, idx);
        }
        return next;
    }

    bool consistent_with(const std::vector<int>& train_indices) const {
        std::vector<int> all = labeled;
        all.insert(all.end(), unlabeled.begin(), unlabeled.end());
        std::sort(all.begin(), all.end());
        std::vector<int> ref = train_indices;
        std::sort(ref.begin(), ref.end());
        if (all != ref) return false;
        for (int l : labeled)
            if (std::binary_search(unlabeled.begin(), unlabeled.end(), l)) return false;
        return true;
    }
};

// ---------------------------------------------------------------------------
// on-disk format
// ---------------------------------------------------------------------------

struct PreprocessConfig {
    double target_spacing = 1.0;  // mm, in-plane
    double percentile = 0.99;
    int target_size = 128;
};

namespace detail {

inline Image<float> resample_bilinear(const Image<float>& in, int oh, int ow) {
    if (oh == in.h && ow == in.w) return in;
    Image<float> out(oh, ow);
    const double fy = static_cast<double>(in.h) / oh, fx = static_cast<double>(in.w) / ow;
    for (int y = 0; y < oh; ++y) {
        double sy = (y + 0.5) * fy - 0.5;
        sy = std::clamp(sy, 0.0, static_cast<double>(in.h - 1));
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, in.h - 1);
        const double wy = sy - y0;
        for (int x = 0; x < ow; ++x) {
            double sx = (x + 0.5) * fx - 0.5;
            sx = std::clamp(sx, 0.0, static_cast<double>(in.w - 1));
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, in.w - 1);
            const double wx = sx - x0;
            const double top = (1.0 - wx) * in.at(y0, x0) + wx * in.at(y0, x1);
            const double bot = (1.0 - wx) * in.at(y1, x0) + wx * in.at(y1, x1);
            out.at(y, x) = static_cast<float>((1.0 - wy) * top + wy * bot);
        }
    }
    return out;
}

inline Mask resample_nearest(const Mask& in, int oh, int ow) {
    if (oh == in.h && ow == in.w) return in;
    Mask out(oh, ow);
    for (int y = 0; y < oh; ++y) {
        int sy = std::min(in.h - 1, static_cast<int>((y + 0.5) * in.h / oh));
        for (int x = 0; x < ow; ++x) {
            int sx = std::min(in.w - 1, static_cast<int>((x + 0.5) * in.w / ow));
            out.at(y, x) = in.at(sy, sx);
        }
    }
    return out;
}

// exact box-filter resampling along one axis; identity when sizes match
inline void area_resample_axis(const std::vector<float>& in, int n_in, std::vector<float>& out, int n_out,
                               int lines, int stride_in, int line_in, int stride_out, int line_out) {
    const double ratio = static_cast<double>(n_in) / n_out;
    for (int l = 0; l < lines; ++l)
        for (int o = 0; o < n_out; ++o) {
            const double a = o * ratio, b = (o + 1) * ratio;
            const int k0 = static_cast<int>(std::floor(a));
            const int k1 = std::min(n_in, static_cast<int>(std::ceil(b)));
            double acc = 0.0;
            for (int k = k0; k < k1; ++k) {
                const double lo = std::max(a, static_cast<double>(k));
                const double hi = std::min(b, static_cast<double>(k + 1));
                if (hi > lo) acc += (hi - lo) * in[static_cast<size_t>(l) * line_in + static_cast<size_t>(k) * stride_in];
            }
            out[static_cast<size_t>(l) * line_out + static_cast<size_t>(o) * stride_out] =
                static_cast<float>(acc / ratio);
        }
}

inline Image<float> area_resize(const Image<float>& in, int oh, int ow) {
    if (oh == in.h && ow == in.w) return in;
    // rows: W -> ow for each of in.h lines
    std::vector<float> mid(static_cast<size_t>(in.h) * ow);
    area_resample_axis(in.v, in.w, mid, ow, in.h, 1, in.w, 1, ow);
    // cols: H -> oh for each of ow lines
    Image<float> out(oh, ow);
    area_resample_axis(mid, in.h, out.v, oh, ow, ow, 1, ow, 1);
    return out;
}

template <typename G>
G pad_to_square(const G& in, int side) {
    G out(side, side);
    const int oy = (side - in.h) / 2, ox = (side - in.w) / 2;
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x) out.at(y + oy, x + ox) = in.at(y, x);
    return out;
}

inline float nearest_rank_percentile(std::vector<float> values, double q) {
    if (values.empty()) return 0.0f;
    std::sort(values.begin(), values.end());
    const auto n = static_cast<double>(values.size());
    size_t k = static_cast<size_t>(std::ceil(q * n));
    if (k == 0) k = 1;
    if (k > values.size()) k = values.size();
    return values[k - 1];
}

}  // namespace detail

inline uint64_t dataset_content_hash(const std::vector<SegSample>& samples) {
    uint64_t h = 0xCBF29CE484222325ull;
    auto feed = [&h](const void* p, size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001B3ull;
        }
    };
    for (const auto& s : samples) {
        feed(s.image.v.data(), s.image.v.size() * sizeof(float));
        feed(s.mask.v.data(), s.mask.v.size());
    }
    return h;
}

/// Write samples in the portable subject-directory format (one volume per
/// subject, slices stacked in slice_index order, spacing 1.0 mm).
inline void write_dataset(const std::filesystem::path& root, const std::vector<SegSample>& samples,
                          const std::string& name = "dataset") {
    namespace fs = std::filesystem;
    fs::create_directories(root);

    std::vector<std::string> subject_order;
    std::map<std::string, std::vector<const SegSample*>> by_subject;
    for (const auto& s : samples) {
        auto [it, inserted] = by_subject.try_emplace(s.subject_id);
        if (inserted) subject_order.push_back(s.subject_id);
        it->second.push_back(&s);
    }

    for (const auto& sid : subject_order) {
        auto slices = by_subject[sid];
        std::sort(slices.begin(), slices.end(),
                  [](const SegSample* a, const SegSample* b) { return a->slice_index < b->slice_index; });
        const int d = static_cast<int>(slices.size());
        const int h = slices[0]->image.h, w = slices[0]->image.w;
        fs::path dir = root / sid;
        fs::create_directories(dir);

        auto write_sidecar = [&](const fs::path& p, const std::string& dtype, const std::string& role) {
            nlohmann::json j;
            j["shape"] = {d, h, w};
            j["spacing"] = {1.0, 1.0};
            j["dtype"] = dtype;
            j["role"] = role;
            std::ofstream os(p);
            os << j.dump(2) << "\n";
        };
        {
            std::ofstream os(dir / "image.bin", std::ios::binary);
            for (const auto* s : slices)
                os.write(reinterpret_cast<const char*>(s->image.v.data()),
                         static_cast<std::streamsize>(s->image.v.size() * sizeof(float)));
            write_sidecar(dir / "image.json", "float32", "image");
        }
        {
            std::ofstream os(dir / "mask.bin", std::ios::binary);
            for (const auto* s : slices)
                os.write(reinterpret_cast<const char*>(s->mask.v.data()),
                         static_cast<std::streamsize>(s->mask.v.size()));
            write_sidecar(dir / "mask.json", "uint8", "mask");
        }
    }

    nlohmann::json manifest;
    manifest["name"] = name;
    manifest["num_samples"] = samples.size();
    manifest["subjects"] = subject_order;
    char hex[32];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(dataset_content_hash(samples)));
    manifest["content_hash"] = std::string(hex);
    std::ofstream os(root / "manifest.json");
    os << manifest.dump(2) << "\n";
}

namespace detail {

struct RawVolume {
    int d = 0, h = 0, w = 0;
    double sy = 1.0, sx = 1.0;
    std::string dtype, role;
    std::vector<char> bytes;
};

inline RawVolume read_volume(const std::filesystem::path& bin, const std::filesystem::path& sidecar) {
    namespace fs = std::filesystem;
    if (!fs::exists(sidecar))
        throw std::runtime_error("load_slices: missing metadata sidecar " + sidecar.string());
    nlohmann::json j;
    {
        std::ifstream is(sidecar);
        if (!is) throw std::runtime_error("load_slices: cannot open " + sidecar.string());
        is >> j;
    }
    RawVolume v;
    try {
        auto shape = j.at("shape");
        v.d = shape.at(0).get<int>();
        v.h = shape.at(1).get<int>();
        v.w = shape.at(2).get<int>();
        auto spacing = j.at("spacing");
        const size_t off = spacing.size() > 2 ? spacing.size() - 2 : 0;  // trailing (y, x)
        v.sy = spacing.at(off).get<double>();
        v.sx = spacing.at(off + 1).get<double>();
        v.dtype = j.at("dtype").get<std::string>();
        v.role = j.at("role").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("load_slices: bad metadata in " + sidecar.string() + ": " + e.what());
    }
    if (!fs::exists(bin)) throw std::runtime_error("load_slices: missing array file " + bin.string());
    std::ifstream is(bin, std::ios::binary);
    v.bytes.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
    const size_t unit = v.dtype == "float32" ? 4 : 1;
    if (v.bytes.size() != static_cast<size_t>(v.d) * v.h * v.w * unit)
        throw std::runtime_error("load_slices: size mismatch in " + bin.string());
    return v;
}

}  // namespace detail

/// Load every z-slice of every subject volume under `root`, applying the
/// slice pipeline: in-plane resample to target spacing, percentile
/// normalization per volume, centered pad to square, resize to target_size
/// (area average for images, nearest neighbor for masks).
inline std::vector<SegSample> load_slices(const std::filesystem::path& root,
                                          const PreprocessConfig& cfg = {}) {
    namespace fs = std::filesystem;
    if (!fs::exists(root)) throw std::runtime_error("load_slices: no such dataset root " + root.string());

    std::vector<std::string> subjects;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) subjects.push_back(e.path().filename().string());
    std::sort(subjects.begin(), subjects.end());

    std::vector<SegSample> out;
    for (const auto& sid : subjects) {
        const fs::path dir = root / sid;
        auto img = detail::read_volume(dir / "image.bin", dir / "image.json");
        auto msk = detail::read_volume(dir / "mask.bin", dir / "mask.json");
        if (img.dtype != "float32")
            throw std::runtime_error("load_slices: image volume must be float32: " + (dir / "image.json").string());
        if (msk.dtype != "uint8")
            throw std::runtime_error("load_slices: mask volume must be uint8: " + (dir / "mask.json").string());
        if (img.d != msk.d || img.h != msk.h || img.w != msk.w)
            throw std::runtime_error("load_slices: image/mask shape mismatch for subject " + sid);

        const int rh = std::max(1, static_cast<int>(std::lround(img.h * img.sy / cfg.target_spacing)));
        const int rw = std::max(1, static_cast<int>(std::lround(img.w * img.sx / cfg.target_spacing)));

        std::vector<Image<float>> islices(static_cast<size_t>(img.d));
        std::vector<Mask> mslices(static_cast<size_t>(img.d));
        std::vector<float> all;
        all.reserve(static_cast<size_t>(img.d) * rh * rw);
        for (int z = 0; z < img.d; ++z) {
            Image<float> sl(img.h, img.w);
            std::memcpy(sl.v.data(), img.bytes.data() + static_cast<size_t>(z) * img.h * img.w * 4,
                        static_cast<size_t>(img.h) * img.w * 4);
            Mask ms(msk.h, msk.w);
            std::memcpy(ms.v.data(), msk.bytes.data() + static_cast<size_t>(z) * msk.h * msk.w,
                        static_cast<size_t>(msk.h) * msk.w);
            islices[static_cast<size_t>(z)] = detail::resample_bilinear(sl, rh, rw);
            mslices[static_cast<size_t>(z)] = detail::resample_nearest(ms, rh, rw);
            all.insert(all.end(), islices[static_cast<size_t>(z)].v.begin(), islices[static_cast<size_t>(z)].v.end());
        }

        const float p99 = detail::nearest_rank_percentile(std::move(all), cfg.percentile);
        for (auto& sl : islices)
            if (p99 > 0.0f)
                for (auto& px : sl.v) px = std::min(px, p99) / p99;

        const int side = std::max(rh, rw);
        for (int z = 0; z < img.d; ++z) {
            SegSample s;
            s.subject_id = sid;
            s.slice_index = z;
            s.image = detail::area_resize(detail::pad_to_square(islices[static_cast<size_t>(z)], side),
                                          cfg.target_size, cfg.target_size);
            s.mask = detail::resample_nearest(detail::pad_to_square(mslices[static_cast<size_t>(z)], side),
                                              cfg.target_size, cfg.target_size);
            out.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace taal
