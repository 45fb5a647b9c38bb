#pragma once

// Per-cycle training: soft Dice supervised loss, cross-augmentation
// consistency loss (weighted JSD over K aligned augmented predictions),
// Gaussian ramp-up of the consistency weight, linear warmup + cosine
// annealing learning-rate schedule, and an Adam loop with a fixed step
// count per cycle. The model retrains from scratch every cycle.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "taal/augment.hpp"
#include "taal/data.hpp"
#include "taal/divergence.hpp"
#include "taal/metrics.hpp"
#include "taal/net.hpp"
#include "taal/rng.hpp"

namespace taal {

enum class ModelSelection { BestValDice, LastEpoch };

struct TrainConfig {
    int epochs = 75;
    int batches_per_epoch = 250;
    int batch_size = 4;
    double base_lr = 1e-6;
    double weight_decay = 1e-4;
    int warmup_epochs = 10;
    double warmup_factor = 200.0;
    int ramp_length = 10;  // t_R, in epochs
    int consistency_k = 3;
    double alpha = 0.75;
    bool semi_supervised = true;
    double flip_prob = 0.5;
    double noise_sigma = 0.1;  // sigma of the augmentation noise (variance 0.01)
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
    ModelSelection model_selection = ModelSelection::BestValDice;

    void validate() const {
        if (epochs < 1 || batches_per_epoch < 1 || batch_size < 1)
            throw std::invalid_argument("TrainConfig: steps must be positive");
        if (base_lr <= 0 || warmup_factor <= 0) throw std::invalid_argument("TrainConfig: bad learning rate");
        if (warmup_epochs < 0 || warmup_epochs > epochs)
            throw std::invalid_argument("TrainConfig: warmup_epochs must be within [0, epochs]");
        if (ramp_length < 0) throw std::invalid_argument("TrainConfig: negative ramp_length");
        if (consistency_k < 2) throw std::invalid_argument("TrainConfig: consistency needs K >= 2");
        if (alpha < 0 || alpha > 1) throw std::invalid_argument("TrainConfig: alpha outside [0,1]");
        if (noise_sigma < 0) throw std::invalid_argument("TrainConfig: negative noise_sigma");
    }

    TransformPolicy policy() const { return TransformPolicy(flip_prob, {0, 1, 2, 3}, noise_sigma); }
};

struct LossReport {
    double supervised = 0.0;
    double consistency = 0.0;
    double lambda = 0.0;
    double total = 0.0;
};

inline LossReport make_loss_report(double supervised, double consistency, double lambda) {
    LossReport r;
    r.supervised = supervised;
    r.consistency = consistency;
    r.lambda = lambda;
    r.total = supervised + lambda * consistency;
    return r;
}

/// Gaussian ramp-up weight: exp(-5 (1 - t/t_R)^2) for t < t_R, then 1.
inline double ramp_weight(double t, double t_ramp) {
    if (t_ramp <= 0.0 || t >= t_ramp) return 1.0;
    const double u = 1.0 - t / t_ramp;
    return std::exp(-5.0 * u * u);
}

/// Linear warmup from base_lr to warmup_factor * base_lr over the first
/// warmup_epochs, then cosine annealing from the peak down to zero.
inline double lr_at(long long step, const TrainConfig& cfg) {
    const long long total = static_cast<long long>(cfg.epochs) * cfg.batches_per_epoch;
    const long long warm = static_cast<long long>(cfg.warmup_epochs) * cfg.batches_per_epoch;
    const double peak = cfg.base_lr * cfg.warmup_factor;
    if (step < warm) {
        return cfg.base_lr + (peak - cfg.base_lr) * static_cast<double>(step) / static_cast<double>(warm);
    }
    if (total <= warm) return peak;
    const double progress = static_cast<double>(step - warm) / static_cast<double>(total - warm);
    return peak * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

// ---------------------------------------------------------------------------
// Dice loss
// ---------------------------------------------------------------------------

/// Soft Dice loss over non-background channels:
///   1 - mean_c (2 sum p*y + s) / (sum p + sum y + s),  s = 1e-5.
template <typename T>
T dice_loss(const PlaneStack<T>& probs, const Mask& target, T smooth = T(1e-5)) {
    if (probs.h != target.h || probs.w != target.w)
        throw std::invalid_argument("dice_loss: shape mismatch");
    const int c = probs.c;
    T acc = T(0);
    for (int cls = 1; cls < c; ++cls) {
        T inter = T(0), psum = T(0), tsum = T(0);
        for (int y = 0; y < probs.h; ++y)
            for (int x = 0; x < probs.w; ++x) {
                const T p = probs.at(cls, y, x);
                const T t = target.at(y, x) == cls ? T(1) : T(0);
                inter += p * t;
                psum += p;
                tsum += t;
            }
        acc += (T(2) * inter + smooth) / (psum + tsum + smooth);
    }
    return T(1) - acc / static_cast<T>(c - 1);
}

/// d dice_loss / d probs.
template <typename T>
PlaneStack<T> dice_loss_grad(const PlaneStack<T>& probs, const Mask& target, T smooth = T(1e-5)) {
    const int c = probs.c;
    PlaneStack<T> g(c, probs.h, probs.w, T(0));
    for (int cls = 1; cls < c; ++cls) {
        T inter = T(0), psum = T(0), tsum = T(0);
        for (int y = 0; y < probs.h; ++y)
            for (int x = 0; x < probs.w; ++x) {
                const T p = probs.at(cls, y, x);
                const T t = target.at(y, x) == cls ? T(1) : T(0);
                inter += p * t;
                psum += p;
                tsum += t;
            }
        const T a = T(2) * inter + smooth;
        const T b = psum + tsum + smooth;
        const T inv_b2 = T(1) / (b * b);
        for (int y = 0; y < probs.h; ++y)
            for (int x = 0; x < probs.w; ++x) {
                const T t = target.at(y, x) == cls ? T(1) : T(0);
                g.at(cls, y, x) = -(T(2) * t * b - a) * inv_b2 / static_cast<T>(c - 1);
            }
    }
    return g;
}

// ---------------------------------------------------------------------------
// consistency loss
// ---------------------------------------------------------------------------

/// Aligned predictions for one image under a fixed set of transformations:
/// invert_spatial(t_k, f(apply(t_k, x))). One forward per branch.
template <typename T>
std::vector<PlaneStack<T>> aligned_predictions(UNet<T>& model, const Image<float>& image,
                                               const std::vector<Transformation>& transforms,
                                               const RunMode& base_mode) {
    std::vector<PlaneStack<T>> preds;
    preds.reserve(transforms.size());
    Image<T> img = cast_image<float, T>(image);
    for (size_t k = 0; k < transforms.size(); ++k) {
        Image<T> xt = apply(transforms[k], img);
        Tensor4<T> batch(1, 1, xt.h, xt.w);
        std::copy(xt.v.begin(), xt.v.end(), batch.v.begin());
        RunMode mode = base_mode;
        mode.dropout_seed = derive_seed(base_mode.dropout_seed, "branch", static_cast<uint64_t>(k));
        auto out = model.forward(batch, mode);
        preds.push_back(invert_spatial(transforms[k], slice_sample(out.probs, 0)));
    }
    return preds;
}

/// Consistency loss for one unlabeled image with explicit transformations
/// (the sampled-policy overload draws them first). Value only.
template <typename T>
T consistency_loss_with(UNet<T>& model, const Image<float>& image,
                        const std::vector<Transformation>& transforms, double alpha,
                        const RunMode& mode = RunMode{}) {
    if (transforms.size() < 2)
        throw std::invalid_argument("consistency_loss: needs at least 2 transformations");
    auto preds = aligned_predictions(model, image, transforms, mode);
    return jsd_weighted(preds, static_cast<T>(alpha)).aggregate;
}

template <typename T>
T consistency_loss(UNet<T>& model, const Image<float>& image, const TransformPolicy& policy, int k,
                   double alpha, Rng& rng, const RunMode& mode = RunMode{}) {
    if (k < 2) throw std::invalid_argument("consistency_loss: needs K >= 2");
    std::vector<Transformation> ts;
    ts.reserve(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) ts.push_back(sample_transform(policy, rng));
    return consistency_loss_with(model, image, ts, alpha, mode);
}

/// Value plus parameter gradients (scaled by `scale`), through all branches.
template <typename T>
T consistency_loss_backward(UNet<T>& model, const Image<float>& image,
                            const std::vector<Transformation>& transforms, double alpha, T scale,
                            typename UNet<T>::Params& grads, const RunMode& base_mode) {
    if (transforms.size() < 2)
        throw std::invalid_argument("consistency_loss: needs at least 2 transformations");
    const size_t k = transforms.size();
    Image<T> img = cast_image<float, T>(image);
    std::vector<Tensor4<T>> probs(k);
    std::vector<std::unique_ptr<nn::Trace<T>>> traces(k);
    std::vector<PlaneStack<T>> aligned(k);
    for (size_t i = 0; i < k; ++i) {
        Image<T> xt = apply(transforms[i], img);
        Tensor4<T> batch(1, 1, xt.h, xt.w);
        std::copy(xt.v.begin(), xt.v.end(), batch.v.begin());
        RunMode mode = base_mode;
        mode.dropout_seed = derive_seed(base_mode.dropout_seed, "branch", static_cast<uint64_t>(i));
        auto out = model.forward(batch, mode, true);
        probs[i] = std::move(out.probs);
        traces[i] = std::move(out.trace);
        aligned[i] = invert_spatial(transforms[i], slice_sample(probs[i], 0));
    }
    auto score = jsd_weighted(aligned, static_cast<T>(alpha));
    auto dmaps = jsd_weighted_grad(aligned, static_cast<T>(alpha));
    for (size_t i = 0; i < k; ++i) {
        PlaneStack<T> dbranch = apply_spatial(transforms[i], dmaps[i]);
        Tensor4<T> dprobs(1, dbranch.c, dbranch.h, dbranch.w);
        for (size_t t = 0; t < dbranch.v.size(); ++t) dprobs.v[t] = dbranch.v[t] * scale;
        model.backward(*traces[i], dprobs, grads);
    }
    return score.aggregate;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename T>
class Adam {
public:
    Adam(UNet<T>& model, const TrainConfig& cfg) : cfg_(cfg) {
        model.params().for_each_param([&](std::vector<T>& v) { tensors_.push_back(&v); });
        size_t total = 0;
        for (auto* t : tensors_) total += t->size();
        m_.assign(total, T(0));
        v_.assign(total, T(0));
    }

    void step(typename UNet<T>::Params& grads, double lr) {
        std::vector<std::vector<T>*> gtensors;
        grads.for_each_param([&](std::vector<T>& v) { gtensors.push_back(&v); });
        ++t_;
        const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
        const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        size_t off = 0;
        for (size_t i = 0; i < tensors_.size(); ++i) {
            auto& p = *tensors_[i];
            auto& g = *gtensors[i];
            for (size_t j = 0; j < p.size(); ++j) {
                double grad = static_cast<double>(g[j]) + cfg_.weight_decay * static_cast<double>(p[j]);
                double m = b1 * static_cast<double>(m_[off + j]) + (1.0 - b1) * grad;
                double v = b2 * static_cast<double>(v_[off + j]) + (1.0 - b2) * grad * grad;
                m_[off + j] = static_cast<T>(m);
                v_[off + j] = static_cast<T>(v);
                const double mhat = m / bc1, vhat = v / bc2;
                p[j] = static_cast<T>(static_cast<double>(p[j]) - lr * mhat / (std::sqrt(vhat) + cfg_.adam_eps));
            }
            off += p.size();
        }
    }

private:
    TrainConfig cfg_;
    std::vector<std::vector<T>*> tensors_;
    std::vector<T> m_, v_;
    long long t_ = 0;
};

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

struct EpochStats {
    double supervised = 0.0;
    double consistency = 0.0;
    double total = 0.0;
    double lambda = 0.0;
    double lr = 0.0;
    double val_dice = 0.0;
    double train_dice = 0.0;
};

struct TrainCurves {
    std::vector<EpochStats> epochs;
    int best_epoch = 0;
    double best_val_dice = 0.0;
};

template <typename T>
struct TrainResult {
    UNet<T> model;
    TrainCurves curves;
};

namespace detail {

template <typename T>
double eval_mean_dice(UNet<T>& model, const std::vector<SegSample>& data, const std::vector<int>& indices,
                      int classes) {
    if (indices.empty()) return 0.0;
    std::vector<DiceResult> results;
    results.reserve(indices.size());
    constexpr size_t kChunk = 8;
    for (size_t at = 0; at < indices.size(); at += kChunk) {
        std::vector<const Image<float>*> chunk;
        for (size_t i = at; i < std::min(indices.size(), at + kChunk); ++i)
            chunk.push_back(&data[static_cast<size_t>(indices[i])].image);
        auto preds = model.predict_batch(chunk);
        for (size_t i = 0; i < preds.size(); ++i) {
            const auto& sample = data[static_cast<size_t>(indices[at + i])];
            results.push_back(dice_2d(argmax_mask(preds[i]), sample.mask, classes));
        }
    }
    return mean_of_image_means(results);
}

}  // namespace detail

/// One annotation-cycle training run: fresh model, fixed number of steps,
/// supervised Dice on labeled batches (with joint image/mask augmentation)
/// plus ramped consistency on unlabeled batches. Deterministic per
/// (seed, cycle): all randomness comes from streams derived from them.
template <typename T>
TrainResult<T> train_cycle(const std::vector<SegSample>& data, const PoolPartition& partition,
                           const std::vector<int>& val_indices, const ModelConfig& mcfg,
                           const TrainConfig& tcfg, uint64_t seed, uint64_t cycle) {
    tcfg.validate();
    if (partition.labeled.empty()) throw std::invalid_argument("train_cycle: empty labeled pool");

    TrainResult<T> result;
    result.model = UNet<T>::reinitialize(mcfg, derive_seed(seed, "model-init", cycle));
    UNet<T>& model = result.model;
    Adam<T> opt(model, tcfg);
    auto grads = model.make_grads();

    Rng batch_rng = stream(seed, "batches", cycle);
    Rng aug_rng = stream(seed, "augment", cycle);
    const uint64_t drop_root = derive_seed(seed, "dropout", cycle);
    const TransformPolicy policy = tcfg.policy();

    typename UNet<T>::Params best_params;
    double best_val = -1.0;
    int best_epoch = 0;

    const int bsz = tcfg.batch_size;
    for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
        const double lambda = tcfg.semi_supervised ? ramp_weight(epoch, tcfg.ramp_length) : 0.0;
        double sum_sup = 0.0, sum_cons = 0.0, sum_total = 0.0, last_lr = 0.0;

        for (int b = 0; b < tcfg.batches_per_epoch; ++b) {
            const long long step = static_cast<long long>(epoch) * tcfg.batches_per_epoch + b;
            const double lr = lr_at(step, tcfg);
            last_lr = lr;
            grads.for_each_param([](std::vector<T>& v) { std::fill(v.begin(), v.end(), T(0)); });

            // labeled batch, jointly augmented (noise on the image only)
            Tensor4<T> xb(bsz, 1, mcfg.input_h, mcfg.input_w);
            std::vector<Mask> targets(static_cast<size_t>(bsz));
            for (int j = 0; j < bsz; ++j) {
                const int idx = partition.labeled[static_cast<size_t>(
                    batch_rng.bits() % partition.labeled.size())];
                const auto& s = data[static_cast<size_t>(idx)];
                Transformation t = sample_transform(policy, aug_rng);
                Image<T> img = apply(t, cast_image<float, T>(s.image));
                std::copy(img.v.begin(), img.v.end(), xb.sample(j));
                targets[static_cast<size_t>(j)] = apply_spatial(t, s.mask);
            }
            RunMode sup_mode;
            sup_mode.training = true;
            sup_mode.dropout_seed = derive_seed(drop_root, "supervised", static_cast<uint64_t>(step));
            auto sup_out = model.forward(xb, sup_mode, true);
            double sup = 0.0;
            Tensor4<T> dprobs(bsz, mcfg.classes, mcfg.input_h, mcfg.input_w);
            for (int j = 0; j < bsz; ++j) {
                PlaneStack<T> pj = slice_sample(sup_out.probs, j);
                sup += static_cast<double>(dice_loss(pj, targets[static_cast<size_t>(j)]));
                PlaneStack<T> gj = dice_loss_grad(pj, targets[static_cast<size_t>(j)]);
                const T inv = T(1) / static_cast<T>(bsz);
                for (auto& v : gj.v) v *= inv;
                put_sample(dprobs, j, gj);
            }
            sup /= bsz;
            model.backward(*sup_out.trace, dprobs, grads);

            // consistency on an unlabeled batch
            double cons = 0.0;
            if (tcfg.semi_supervised && !partition.unlabeled.empty()) {
                const int k = tcfg.consistency_k;
                std::vector<const SegSample*> usamples(static_cast<size_t>(bsz));
                std::vector<std::vector<Transformation>> ts(static_cast<size_t>(bsz));
                for (int j = 0; j < bsz; ++j) {
                    const int idx = partition.unlabeled[static_cast<size_t>(
                        batch_rng.bits() % partition.unlabeled.size())];
                    usamples[static_cast<size_t>(j)] = &data[static_cast<size_t>(idx)];
                    ts[static_cast<size_t>(j)].reserve(static_cast<size_t>(k));
                    for (int kk = 0; kk < k; ++kk)
                        ts[static_cast<size_t>(j)].push_back(sample_transform(policy, aug_rng));
                }
                // branch k: one batched forward over all samples' k-th transform
                std::vector<Tensor4<T>> branch_probs(static_cast<size_t>(k));
                std::vector<std::unique_ptr<nn::Trace<T>>> branch_traces(static_cast<size_t>(k));
                for (int kk = 0; kk < k; ++kk) {
                    Tensor4<T> ub(bsz, 1, mcfg.input_h, mcfg.input_w);
                    for (int j = 0; j < bsz; ++j) {
                        Image<T> img = apply(ts[static_cast<size_t>(j)][static_cast<size_t>(kk)],
                                             cast_image<float, T>(usamples[static_cast<size_t>(j)]->image));
                        std::copy(img.v.begin(), img.v.end(), ub.sample(j));
                    }
                    RunMode mode;
                    mode.training = true;
                    mode.dropout_seed =
                        derive_seed(drop_root, "consistency", static_cast<uint64_t>(step), static_cast<uint64_t>(kk));
                    auto out = model.forward(ub, mode, true);
                    branch_probs[static_cast<size_t>(kk)] = std::move(out.probs);
                    branch_traces[static_cast<size_t>(kk)] = std::move(out.trace);
                }
                std::vector<Tensor4<T>> branch_dprobs(static_cast<size_t>(k));
                for (int kk = 0; kk < k; ++kk)
                    branch_dprobs[static_cast<size_t>(kk)] =
                        Tensor4<T>(bsz, mcfg.classes, mcfg.input_h, mcfg.input_w);
                const T scale = static_cast<T>(lambda) / static_cast<T>(bsz);
                for (int j = 0; j < bsz; ++j) {
                    std::vector<PlaneStack<T>> aligned(static_cast<size_t>(k));
                    for (int kk = 0; kk < k; ++kk)
                        aligned[static_cast<size_t>(kk)] =
                            invert_spatial(ts[static_cast<size_t>(j)][static_cast<size_t>(kk)],
                                           slice_sample(branch_probs[static_cast<size_t>(kk)], j));
                    auto score = jsd_weighted(aligned, static_cast<T>(tcfg.alpha));
                    cons += static_cast<double>(score.aggregate);
                    auto dmaps = jsd_weighted_grad(aligned, static_cast<T>(tcfg.alpha));
                    for (int kk = 0; kk < k; ++kk) {
                        PlaneStack<T> db = apply_spatial(ts[static_cast<size_t>(j)][static_cast<size_t>(kk)],
                                                         dmaps[static_cast<size_t>(kk)]);
                        for (auto& v : db.v) v *= scale;
                        put_sample(branch_dprobs[static_cast<size_t>(kk)], j, db);
                    }
                }
                cons /= bsz;
                for (int kk = 0; kk < k; ++kk)
                    model.backward(*branch_traces[static_cast<size_t>(kk)],
                                   branch_dprobs[static_cast<size_t>(kk)], grads);
            }

            const LossReport report = make_loss_report(sup, cons, lambda);
            sum_sup += report.supervised;
            sum_cons += report.consistency;
            sum_total += report.total;
            opt.step(grads, lr);
        }

        EpochStats st;
        st.supervised = sum_sup / tcfg.batches_per_epoch;
        st.consistency = sum_cons / tcfg.batches_per_epoch;
        st.total = sum_total / tcfg.batches_per_epoch;
        st.lambda = lambda;
        st.lr = last_lr;
        st.val_dice = detail::eval_mean_dice(model, data, val_indices, mcfg.classes);
        st.train_dice = detail::eval_mean_dice(model, data, partition.labeled, mcfg.classes);
        result.curves.epochs.push_back(st);

        if (st.val_dice > best_val) {
            best_val = st.val_dice;
            best_epoch = epoch;
            best_params = model.params();
        }
    }

    result.curves.best_epoch = best_epoch;
    result.curves.best_val_dice = best_val;
    if (tcfg.model_selection == ModelSelection::BestValDice && best_val >= 0.0)
        model.params() = best_params;
    return result;
}

}  // namespace taal
