// Reference numeric kernels for the training losses: soft Dice, weighted
// cross-entropy, the multi-scale contrastive loss over labeled embeddings,
// and their lambda-weighted total. Every differentiable kernel returns its
// analytic gradient; finite_difference_max_rel_error provides the
// independent check.
//
// Contrastive loss: rows are L2-normalized, the positive set of an anchor is
// every other same-scale row and the negative set every different-scale row.
// Per pair (i,j):
//   l_ij = -log( exp(s_ij/tau) / (exp(s_ij/tau) + sum_{k in N_i} exp(s_ik/tau)) )
// with s_ab the cosine similarity. Anchors without positives are excluded
// from the outer average. Gradients are with respect to the raw
// (pre-normalization) vectors.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "vesselscale/volume.hpp"

namespace vesselscale {

struct ProbabilityField {
  std::vector<double> values;  // in [0,1], volume linear order
  Dims3 dims{0, 0, 0};
};

struct ValueGrad {
  double value = 0.0;
  std::vector<double> grad;
};

inline void require_aligned(const ProbabilityField& pred, const MaskVolume& gt,
                            const char* what) {
  if (pred.dims != gt.dims() ||
      pred.values.size() != static_cast<std::size_t>(gt.size()))
    throw std::invalid_argument(std::string(what) + ": prediction/mask dims mismatch");
}

/// Soft Dice loss 1 - (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps).
inline ValueGrad soft_dice_loss(const ProbabilityField& pred, const MaskVolume& gt,
                                double epsilon = 1e-6) {
  require_aligned(pred, gt, "soft_dice_loss");
  const std::size_t n = pred.values.size();
  double inter = 0.0, psum = 0.0, gsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = pred.values[i];
    const double g = gt.data()[i] ? 1.0 : 0.0;
    inter += p * g;
    psum += p;
    gsum += g;
  }
  const double num = 2.0 * inter + epsilon;
  const double den = psum + gsum + epsilon;

  ValueGrad out;
  out.value = 1.0 - num / den;
  out.grad.resize(n);
  const double den2 = den * den;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = gt.data()[i] ? 1.0 : 0.0;
    out.grad[i] = -(2.0 * g * den - num) / den2;
  }
  return out;
}

/// Weighted binary cross-entropy, mean over voxels, probabilities clamped to
/// [delta, 1-delta]. weight_fg scales the foreground term, weight_bg the
/// background term.
inline ValueGrad weighted_cross_entropy(const ProbabilityField& pred, const MaskVolume& gt,
                                        double weight_bg = 1.0, double weight_fg = 1.0,
                                        double delta = 1e-7) {
  require_aligned(pred, gt, "weighted_cross_entropy");
  if (weight_bg < 0 || weight_fg < 0)
    throw std::invalid_argument("weighted_cross_entropy: negative class weight");
  const std::size_t n = pred.values.size();
  ValueGrad out;
  out.grad.resize(n);
  double acc = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double raw = pred.values[i];
    const double p = std::clamp(raw, delta, 1.0 - delta);
    const double g = gt.data()[i] ? 1.0 : 0.0;
    acc += weight_fg * g * std::log(p) + weight_bg * (1.0 - g) * std::log(1.0 - p);
    if (raw < delta || raw > 1.0 - delta) {
      out.grad[i] = 0.0;  // clamped: locally flat
    } else {
      out.grad[i] = -inv_n * (weight_fg * g / p - weight_bg * (1.0 - g) / (1.0 - p));
    }
  }
  out.value = -acc * inv_n;
  return out;
}

/// Inverse-frequency class weights (background, foreground) for a mask;
/// balanced classes give (1, 1). A class that does not occur gets weight 1.
inline std::pair<double, double> inverse_frequency_weights(const MaskVolume& gt) {
  const double n = static_cast<double>(gt.size());
  const double fg = static_cast<double>(count_foreground(gt));
  const double bg = n - fg;
  const double w_bg = bg > 0 ? n / (2.0 * bg) : 1.0;
  const double w_fg = fg > 0 ? n / (2.0 * fg) : 1.0;
  return {w_bg, w_fg};
}

/// Combined segmentation loss: unweighted sum of soft Dice and weighted
/// cross-entropy, with the summed gradient.
inline ValueGrad segmentation_loss(const ProbabilityField& pred, const MaskVolume& gt,
                                   double weight_bg = 1.0, double weight_fg = 1.0,
                                   double dice_epsilon = 1e-6) {
  ValueGrad d = soft_dice_loss(pred, gt, dice_epsilon);
  const ValueGrad c = weighted_cross_entropy(pred, gt, weight_bg, weight_fg);
  d.value += c.value;
  for (std::size_t i = 0; i < d.grad.size(); ++i) d.grad[i] += c.grad[i];
  return d;
}

struct EmbeddingBatch {
  std::vector<double> vectors;  // row-major N x d, raw (unnormalized)
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<int> scale_labels;  // per row, values in 1..S
  double temperature = 0.94;
};

struct ContrastiveResult {
  double value = 0.0;
  std::vector<double> grad;         // row-major N x d, w.r.t. raw vectors
  std::vector<double> anchor_terms;  // per row: mean l_ij, NaN when excluded
  std::size_t contributing_anchors = 0;
};

inline ContrastiveResult contrastive_loss(const EmbeddingBatch& batch) {
  const std::size_t n = batch.rows, d = batch.dim;
  if (n < 2) throw std::invalid_argument("contrastive_loss: need at least 2 vectors");
  if (d < 1) throw std::invalid_argument("contrastive_loss: need dimension >= 1");
  if (batch.vectors.size() != n * d || batch.scale_labels.size() != n)
    throw std::invalid_argument("contrastive_loss: batch shape mismatch");
  if (!(batch.temperature > 0.0))
    throw std::invalid_argument("contrastive_loss: temperature must be > 0");
  const double tau = batch.temperature;

  // L2-normalize rows.
  std::vector<double> unit(n * d);
  std::vector<double> norm(n);
  for (std::size_t i = 0; i < n; ++i) {
    double nrm2 = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double x = batch.vectors[i * d + c];
      nrm2 += x * x;
    }
    if (nrm2 == 0.0)
      throw std::invalid_argument("contrastive_loss: zero vector cannot be normalized");
    norm[i] = std::sqrt(nrm2);
    for (std::size_t c = 0; c < d; ++c) unit[i * d + c] = batch.vectors[i * d + c] / norm[i];
  }

  auto sim = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += unit[a * d + c] * unit[b * d + c];
    return s;
  };

  std::vector<std::vector<std::size_t>> positives(n), negatives(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (batch.scale_labels[i] == batch.scale_labels[j])
        positives[i].push_back(j);
      else
        negatives[i].push_back(j);
    }

  std::size_t anchors = 0;
  for (std::size_t i = 0; i < n; ++i) anchors += !positives[i].empty();
  if (anchors == 0)
    throw std::invalid_argument("contrastive_loss: no anchor has a positive");
  const double anchor_w = 1.0 / static_cast<double>(anchors);

  ContrastiveResult out;
  out.contributing_anchors = anchors;
  out.anchor_terms.assign(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> grad_unit(n * d, 0.0);
  double total = 0.0;

  std::vector<double> logits;  // s/tau for [positive, negatives...]
  for (std::size_t i = 0; i < n; ++i) {
    if (positives[i].empty()) continue;
    const double pair_w = anchor_w / static_cast<double>(positives[i].size());
    double anchor_sum = 0.0;
    for (std::size_t j : positives[i]) {
      logits.clear();
      logits.push_back(sim(i, j) / tau);
      for (std::size_t k : negatives[i]) logits.push_back(sim(i, k) / tau);
      const double peak = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double l : logits) z += std::exp(l - peak);
      const double log_z = peak + std::log(z);
      const double l_ij = log_z - logits[0];
      anchor_sum += l_ij;
      total += pair_w * l_ij;

      // d l_ij / d s_iq = (softmax_q - [q == j]) / tau
      auto add_pair_grad = [&](std::size_t a, std::size_t b, double coeff) {
        for (std::size_t c = 0; c < d; ++c) {
          grad_unit[a * d + c] += coeff * unit[b * d + c];
          grad_unit[b * d + c] += coeff * unit[a * d + c];
        }
      };
      const double p_pos = std::exp(logits[0] - peak) / z;
      add_pair_grad(i, j, pair_w * (p_pos - 1.0) / tau);
      for (std::size_t q = 0; q < negatives[i].size(); ++q) {
        const double p_neg = std::exp(logits[q + 1] - peak) / z;
        add_pair_grad(i, negatives[i][q], pair_w * p_neg / tau);
      }
    }
    out.anchor_terms[i] = anchor_sum / static_cast<double>(positives[i].size());
  }
  out.value = total;

  // Chain through the normalization: dL/dv = (dL/du - (u . dL/du) u) / |v|.
  out.grad.resize(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0;
    for (std::size_t c = 0; c < d; ++c) dot += unit[i * d + c] * grad_unit[i * d + c];
    for (std::size_t c = 0; c < d; ++c)
      out.grad[i * d + c] = (grad_unit[i * d + c] - dot * unit[i * d + c]) / norm[i];
  }
  return out;
}

struct LossConfig {
  std::vector<double> lambda_scale{0.78, 0.48, 0.54};
  double lambda_contrastive = 0.53;
  double weight_bg = 1.0;
  double weight_fg = 1.0;
  double dice_epsilon = 1e-6;
};

struct LossBreakdown {
  double main_task = 0.0;
  std::vector<double> scale_tasks;
  double contrastive = 0.0;
  double total = 0.0;
};

/// Total loss l_mt + sum_s lambda_s * l_s + lambda_c * l_c.
inline LossBreakdown total_loss(double main_task, const std::vector<double>& scale_tasks,
                                double contrastive, const LossConfig& cfg) {
  if (scale_tasks.size() != cfg.lambda_scale.size())
    throw std::invalid_argument("total_loss: scale loss count differs from lambda count");
  for (double l : cfg.lambda_scale)
    if (l < 0) throw std::invalid_argument("total_loss: negative lambda");
  if (cfg.lambda_contrastive < 0)
    throw std::invalid_argument("total_loss: negative contrastive lambda");

  LossBreakdown out;
  out.main_task = main_task;
  out.scale_tasks = scale_tasks;
  out.contrastive = contrastive;
  out.total = main_task;
  for (std::size_t s = 0; s < scale_tasks.size(); ++s)
    out.total += cfg.lambda_scale[s] * scale_tasks[s];
  out.total += cfg.lambda_contrastive * contrastive;
  return out;
}

/// Central-difference check of an analytic gradient. `f` evaluates the
/// scalar and its gradient at a point; returns the maximum relative error
/// over coordinates.
inline double finite_difference_max_rel_error(
    const std::function<ValueGrad(std::span<const double>)>& f,
    std::vector<double> point, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite difference step must be > 0");
  const ValueGrad at_point = f(point);
  if (at_point.grad.size() != point.size())
    throw std::invalid_argument("gradient size differs from point size");
  double worst = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + step;
    const double hi = f(point).value;
    point[i] = saved - step;
    const double lo = f(point).value;
    point[i] = saved;
    const double fd = (hi - lo) / (2.0 * step);
    const double an = at_point.grad[i];
    const double scale = std::max({std::abs(fd), std::abs(an), 1e-6});
    worst = std::max(worst, std::abs(fd - an) / scale);
  }
  return worst;
}

}  // namespace vesselscale
