#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "restyle/error.hpp"
#include "restyle/parallel.hpp"
#include "restyle/raster.hpp"
#include "restyle/segmatch.hpp"

namespace restyle {

/// L x d_h token features, one token per row.
using TokenTensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ProjectionWeights {
  Eigen::MatrixXd query;
  Eigen::MatrixXd key;
  Eigen::MatrixXd value;

  static ProjectionWeights identity(int dim) {
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(dim, dim);
    return {eye, eye, eye};
  }
};

struct QKV {
  TokenTensor query;
  TokenTensor key;
  TokenTensor value;
};

inline QKV project_qkv(const TokenTensor& features, const ProjectionWeights& weights) {
  const auto dim = features.cols();
  for (const auto* w : {&weights.query, &weights.key, &weights.value})
    require(w->rows() == dim && w->cols() == dim, ErrorCode::DimensionMismatch,
            "projection weights must be " + std::to_string(dim) + "x" + std::to_string(dim));
  return {features * weights.query, features * weights.key, features * weights.value};
}

namespace detail {

inline void check_attention_shapes(const TokenTensor& q, const TokenTensor& k, const AttentionMask& mask) {
  require(q.cols() == k.cols(), ErrorCode::DimensionMismatch,
          "query dim " + std::to_string(q.cols()) + " vs key dim " + std::to_string(k.cols()));
  require(mask.rows == q.rows() && mask.cols == k.rows(), ErrorCode::DimensionMismatch,
          "mask is " + std::to_string(mask.rows) + "x" + std::to_string(mask.cols) + ", attention is " +
              std::to_string(q.rows()) + "x" + std::to_string(k.rows()));
}

// One row of post-softmax weights. Masked-out entries are removed from the
// softmax support. With RESTYLE_MULTIPLICATIVE_MASK the logits are instead
// multiplied by the mask bit, the literal reading of the masked formula.
inline void softmax_row(const TokenTensor& q, const TokenTensor& k, const AttentionMask& mask, int i, double* out) {
  const int cols = static_cast<int>(k.rows());
  require(!mask.row_empty(i), ErrorCode::EmptyRow, "query row " + std::to_string(i) + " has no admissible key");
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  double peak = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < cols; ++j) {
#ifdef RESTYLE_MULTIPLICATIVE_MASK
    out[j] = mask.at(i, j) ? q.row(i).dot(k.row(j)) * scale : 0.0;
#else
    out[j] = mask.at(i, j) ? q.row(i).dot(k.row(j)) * scale : -std::numeric_limits<double>::infinity();
#endif
    peak = std::max(peak, out[j]);
  }
  double total = 0.0;
  for (int j = 0; j < cols; ++j) {
    out[j] = std::isinf(out[j]) ? 0.0 : std::exp(out[j] - peak);
    total += out[j];
  }
  for (int j = 0; j < cols; ++j) out[j] /= total;
}

}  // namespace detail

/// Row-stochastic attention weights softmax(Q K^T / sqrt(d_h)) restricted to
/// the mask support. Rows are independent and evaluated in parallel.
inline Eigen::MatrixXd attention_scores(const TokenTensor& query, const TokenTensor& key, const AttentionMask& mask) {
  detail::check_attention_shapes(query, key, mask);
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor scores(query.rows(), key.rows());
  parallel_for(static_cast<int>(query.rows()),
               [&](int i) { detail::softmax_row(query, key, mask, i, scores.data() + i * scores.cols()); });
  return scores;
}

inline Eigen::MatrixXd attention_scores(const TokenTensor& query, const TokenTensor& key) {
  return attention_scores(query, key, AttentionMask::all_true(static_cast<int>(query.rows()), static_cast<int>(key.rows())));
}

/// Output token i = sum_j score(i,j) * V_j with score restricted to mask row i.
inline TokenTensor masked_cross_attention(const TokenTensor& query, const TokenTensor& key, const TokenTensor& value,
                                          const AttentionMask& mask) {
  require(key.rows() == value.rows(), ErrorCode::DimensionMismatch,
          "key rows " + std::to_string(key.rows()) + " vs value rows " + std::to_string(value.rows()));
  return attention_scores(query, key, mask) * value;
}

inline TokenTensor plain_attention(const TokenTensor& query, const TokenTensor& key, const TokenTensor& value) {
  return masked_cross_attention(
      query, key, value, AttentionMask::all_true(static_cast<int>(query.rows()), static_cast<int>(key.rows())));
}

/// Tokens are non-overlapping patch x patch blocks, row-major over the grid.
struct PatchGrid {
  int patch = 1;
  int cols = 0;
  int rows = 0;
  int tokens() const { return cols * rows; }
};

inline PatchGrid make_patch_grid(const ImageBuffer& image, int patch) {
  require(patch >= 1 && image.width % patch == 0 && image.height % patch == 0, ErrorCode::DimensionMismatch,
          "patch size " + std::to_string(patch) + " must divide " + extent_string(image.width, image.height));
  return {patch, image.width / patch, image.height / patch};
}

/// Patch mean colors as an L x channels token tensor.
inline TokenTensor patch_means(const ImageBuffer& image, const PatchGrid& grid) {
  TokenTensor means = TokenTensor::Zero(grid.tokens(), image.channels);
  const double area = static_cast<double>(grid.patch) * grid.patch;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const int token = (y / grid.patch) * grid.cols + x / grid.patch;
      for (int c = 0; c < image.channels; ++c) means(token, c) += image.at(x, y, c);
    }
  return means / area;
}

struct TransferOptions {
  int patch = 4;
  /// Divides the logits; small values sharpen arbitration among same-class tokens.
  double temperature = 1.0;
};

/// Desk-scale appearance transfer: patches become tokens whose features are
/// patch mean colors, projections are identity, and each source patch is
/// shifted to the attention-weighted mean of its admissible style patches.
/// Within-patch residuals are preserved; results are clamped to [0,1].
inline ImageBuffer toy_semantic_transfer(const ImageBuffer& src, const ImageBuffer& style, const SemanticMap& src_map,
                                         const SemanticMap& style_map, const ClassMatch& match,
                                         const TransferOptions& options = {}) {
  require(src.width == style.width && src.height == style.height && src.channels == style.channels,
          ErrorCode::DimensionMismatch, "source and style images must share extent and channels");
  require(src_map.width() == src.width && src_map.height() == src.height && style_map.width() == style.width &&
              style_map.height() == style.height,
          ErrorCode::DimensionMismatch, "semantic maps must match their images");
  require(options.temperature > 0.0 && std::isfinite(options.temperature), ErrorCode::InvalidParams,
          "temperature must be positive");
  const PatchGrid grid = make_patch_grid(src, options.patch);

  const SemanticMap src_tokens = downsample_map(src_map, grid.cols, grid.rows);
  const SemanticMap style_tokens = downsample_map(style_map, grid.cols, grid.rows);
  const KeepAwareMask masks = build_attention_mask_with_keep(src_tokens, style_tokens, match);

  const TokenTensor src_means = patch_means(src, grid);
  const TokenTensor style_means = patch_means(style, grid);
  const QKV src_qkv = project_qkv(src_means, ProjectionWeights::identity(src.channels));
  const QKV style_qkv = project_qkv(style_means, ProjectionWeights::identity(src.channels));
  const TokenTensor query = src_qkv.query / options.temperature;
  TokenTensor new_means = masked_cross_attention(query, style_qkv.key, style_qkv.value, masks.mask);

  for (int i = 0; i < grid.tokens(); ++i)
    if (masks.keep_rows[static_cast<std::size_t>(i)]) new_means.row(i) = src_means.row(i);

  ImageBuffer out(src.width, src.height, src.channels);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x) {
      const int token = (y / grid.patch) * grid.cols + x / grid.patch;
      for (int c = 0; c < src.channels; ++c) {
        const double v = src.at(x, y, c) - src_means(token, c) + new_means(token, c);
        out.at(x, y, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  return out;
}

}  // namespace restyle
