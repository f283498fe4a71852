#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "restyle/error.hpp"
#include "restyle/raster.hpp"

namespace restyle {

/// Label raster plus the id -> class-name table it refers to.
struct SemanticMap {
  LabelRaster labels;
  LabelTable table;

  int width() const { return labels.width; }
  int height() const { return labels.height; }
  std::size_t size() const { return labels.pixel_count(); }
  std::uint16_t id_at(std::size_t i) const { return labels.data[i]; }
  const std::string& class_at(std::size_t i) const { return table.at(labels.data[i]); }

  void validate(const std::string& where = "semantic map") const {
    for (std::size_t i = 0; i < labels.data.size(); ++i) {
      require(table.count(labels.data[i]) != 0, ErrorCode::UnknownLabelId,
              where + ": label id " + std::to_string(labels.data[i]) + " missing from label table");
    }
  }

  /// Class names that actually occur in the raster.
  std::set<std::string> present_classes() const {
    std::set<std::uint16_t> ids(labels.data.begin(), labels.data.end());
    std::set<std::string> names;
    for (auto id : ids) names.insert(table.at(id));
    return names;
  }
};

enum class UnmatchedPolicy { GlobalAttend, KeepSource };

/// Source class -> style class. A map, so no source class can appear twice.
struct ClassMatch {
  std::map<std::string, std::string> pairs;
  UnmatchedPolicy policy_unmatched = UnmatchedPolicy::GlobalAttend;

  bool matched(const std::string& source_class) const { return pairs.count(source_class) != 0; }
  bool contains(const std::string& source_class, const std::string& style_class) const {
    auto it = pairs.find(source_class);
    return it != pairs.end() && it->second == style_class;
  }
};

using ClassOverride = std::pair<std::string, std::string>;

/// Exact class-name matching over classes present in both maps; explicit
/// overrides replace the default pairing of their source class.
inline ClassMatch match_classes(const SemanticMap& src, const SemanticMap& style,
                                const std::vector<ClassOverride>& overrides = {},
                                UnmatchedPolicy policy = UnmatchedPolicy::GlobalAttend) {
  ClassMatch match;
  match.policy_unmatched = policy;
  const auto src_classes = src.present_classes();
  const auto style_classes = style.present_classes();
  for (const auto& name : src_classes)
    if (style_classes.count(name)) match.pairs[name] = name;

  std::set<std::string> seen;
  for (const auto& [from, to] : overrides) {
    require(seen.insert(from).second, ErrorCode::ConflictingOverride,
            "source class '" + from + "' is overridden more than once");
    match.pairs[from] = to;
  }
  return match;
}

/// Per-class one-hot planes resampled bilinearly (half-pixel centers, edge
/// clamp) to out_w x out_h, then argmax per cell; ties go to the lower id.
inline SemanticMap downsample_map(const SemanticMap& map, int out_w, int out_h) {
  require(out_w >= 1 && out_h >= 1 && out_w <= map.width() && out_h <= map.height(), ErrorCode::InvalidParams,
          "downsample target " + extent_string(out_w, out_h) + " must be within 1.." +
              extent_string(map.width(), map.height()));
  SemanticMap out;
  out.table = map.table;
  out.labels = LabelRaster(out_w, out_h);
  const double sx = static_cast<double>(map.width()) / out_w;
  const double sy = static_cast<double>(map.height()) / out_h;

  auto taps = [](double pos, int n) {
    pos = std::clamp(pos, 0.0, static_cast<double>(n - 1));
    const int i0 = static_cast<int>(std::floor(pos));
    const int i1 = std::min(i0 + 1, n - 1);
    const double f = pos - i0;
    return std::array<std::pair<int, double>, 2>{{{i0, 1.0 - f}, {i1, f}}};
  };

  std::map<std::uint16_t, double> score;
  for (int y = 0; y < out_h; ++y) {
    const auto ty = taps((y + 0.5) * sy - 0.5, map.height());
    for (int x = 0; x < out_w; ++x) {
      const auto tx = taps((x + 0.5) * sx - 0.5, map.width());
      score.clear();
      for (const auto& [yy, wy] : ty)
        for (const auto& [xx, wx] : tx) score[map.labels.at(xx, yy)] += wy * wx;
      // std::map iterates ids ascending, so strict > keeps the lowest id on ties
      std::uint16_t best = score.begin()->first;
      double best_w = -1.0;
      for (const auto& [id, w] : score) {
        if (w > best_w) {
          best_w = w;
          best = id;
        }
      }
      out.labels.at(x, y) = best;
    }
  }
  return out;
}

inline SemanticMap downsample_map(const SemanticMap& map, int d) { return downsample_map(map, d, d); }

/// Binary support over (query token, key token). Rows index source/output
/// tokens, columns index style tokens.
struct AttentionMask {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> bits;

  AttentionMask() = default;
  AttentionMask(int r, int c, bool value) : rows(r), cols(c), bits(static_cast<std::size_t>(r) * c, value ? 1 : 0) {}

  static AttentionMask all_true(int r, int c) { return AttentionMask(r, c, true); }

  bool at(int i, int j) const { return bits[static_cast<std::size_t>(i) * cols + j] != 0; }
  void set(int i, int j, bool v) { bits[static_cast<std::size_t>(i) * cols + j] = v ? 1 : 0; }
  bool row_empty(int i) const {
    const auto* row = bits.data() + static_cast<std::size_t>(i) * cols;
    return std::none_of(row, row + cols, [](std::uint8_t b) { return b != 0; });
  }
  void fill_row(int i, bool v) {
    std::fill_n(bits.begin() + static_cast<std::ptrdiff_t>(i) * cols, cols, v ? 1 : 0);
  }
};

/// Mask plus the rows that should keep the source appearance (KeepSource).
struct KeepAwareMask {
  AttentionMask mask;
  std::vector<std::uint8_t> keep_rows;
};

namespace detail {

// Rows with no admissible style token are returned as empty; callers decide.
inline AttentionMask raw_attention_mask(const SemanticMap& src_d, const SemanticMap& style_d, const ClassMatch& match) {
  const int rows = static_cast<int>(src_d.size());
  const int cols = static_cast<int>(style_d.size());
  std::map<std::string, std::vector<int>> style_tokens;
  for (int j = 0; j < cols; ++j) style_tokens[style_d.class_at(static_cast<std::size_t>(j))].push_back(j);

  AttentionMask mask(rows, cols, false);
  for (int i = 0; i < rows; ++i) {
    auto it = match.pairs.find(src_d.class_at(static_cast<std::size_t>(i)));
    if (it == match.pairs.end()) continue;
    auto tokens = style_tokens.find(it->second);
    if (tokens == style_tokens.end()) continue;
    for (int j : tokens->second) mask.set(i, j, true);
  }
  return mask;
}

inline void check_token_grids(const SemanticMap& src_d, const SemanticMap& style_d) {
  require(src_d.width() == style_d.width() && src_d.height() == style_d.height(), ErrorCode::DimensionMismatch,
          "source token grid " + extent_string(src_d.width(), src_d.height()) + " vs style token grid " +
              extent_string(style_d.width(), style_d.height()));
}

}  // namespace detail

/// M(i,j) = 1 iff the classes of source token i and style token j form a
/// matched pair. Under GlobalAttend, rows with no admissible style token
/// attend to the whole style image; under KeepSource such rows are an error.
inline AttentionMask build_attention_mask(const SemanticMap& src_d, const SemanticMap& style_d, const ClassMatch& match) {
  detail::check_token_grids(src_d, style_d);
  AttentionMask mask = detail::raw_attention_mask(src_d, style_d, match);
  for (int i = 0; i < mask.rows; ++i) {
    if (!mask.row_empty(i)) continue;
    require(match.policy_unmatched == UnmatchedPolicy::GlobalAttend, ErrorCode::EmptyRowWithKeepSource,
            "token " + std::to_string(i) + " (class '" + src_d.class_at(static_cast<std::size_t>(i)) +
                "') has no matched style token");
    mask.fill_row(i, true);
  }
  return mask;
}

/// KeepSource path: empty rows are flagged in keep_rows and filled all-true
/// so the mask stays attention-ready.
inline KeepAwareMask build_attention_mask_with_keep(const SemanticMap& src_d, const SemanticMap& style_d,
                                                    const ClassMatch& match) {
  detail::check_token_grids(src_d, style_d);
  KeepAwareMask out{detail::raw_attention_mask(src_d, style_d, match), {}};
  out.keep_rows.assign(static_cast<std::size_t>(out.mask.rows), 0);
  for (int i = 0; i < out.mask.rows; ++i) {
    if (!out.mask.row_empty(i)) continue;
    out.keep_rows[static_cast<std::size_t>(i)] = match.policy_unmatched == UnmatchedPolicy::KeepSource ? 1 : 0;
    out.mask.fill_row(i, true);
  }
  return out;
}

}  // namespace restyle
