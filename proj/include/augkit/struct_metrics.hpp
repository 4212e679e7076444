#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "augkit/detections.hpp"
#include "augkit/imaging.hpp"
#include "augkit/png_io.hpp"
#include "augkit/tensor_io.hpp"

// Structure-preservation metrics over paired projector outputs. The original
// side is always the reference; every dataset value is pooled or averaged in
// pair order so reports are reproducible bit for bit.
namespace augkit::structmetrics {

using tensorio::Box;
using tensorio::DetectionSet;
using tensorio::LabelMap;

double box_iou(const Box& a, const Box& b);

// --- semantic mIoU ---------------------------------------------------------

struct ClassIou {
  int class_id = 0;
  double iou = 0;
};

struct ImageMiou {
  std::vector<ClassIou> per_class;  ///< ascending class id, valid classes only
  double mean = 0;
  /// False when no class appears on either side; the image is then left out
  /// of the dataset mean.
  bool included = false;
};

ImageMiou image_miou(const LabelMap& src, const LabelMap& gen);

/// Mean of the per-image means of included images. Throws MetricError when
/// none is included.
double dataset_miou(std::span<const ImageMiou> images);

// --- depth RMSE ------------------------------------------------------------

struct DepthPairStats {
  double sum_sq = 0;
  uint64_t valid = 0;
};

/// Pixels that are finite and > 0 in both maps.
imaging::BinaryMask depth_valid_mask(const tensorio::Tensor& src,
                                     const tensorio::Tensor& gen);

DepthPairStats depth_pair_stats(const tensorio::Tensor& src,
                                const tensorio::Tensor& gen,
                                const imaging::BinaryMask& valid);

struct DepthPair {
  const tensorio::Tensor* src;
  const tensorio::Tensor* gen;
  const imaging::BinaryMask* valid;
};

/// sqrt(sum of squared errors / total valid pixels), pooled over all pairs.
double depth_rmse(std::span<const DepthPair> pairs);
double pooled_rmse(std::span<const DepthPairStats> stats);

// --- masked edge L1 --------------------------------------------------------

struct EdgePairStats {
  uint64_t abs_diff = 0;  ///< masked pixels where the edge maps disagree
  uint64_t mask = 0;      ///< masked pixel count
};

EdgePairStats edge_pair_stats(const imaging::EdgeMap& src,
                              const imaging::EdgeMap& gen,
                              const imaging::BinaryMask& mask);

/// Single-pair convenience: the pooled value for one pair.
double masked_edge_l1(const imaging::EdgeMap& src, const imaging::EdgeMap& gen,
                      const imaging::BinaryMask& mask);
double pooled_edge_l1(std::span<const EdgePairStats> stats);

// --- object F1 -------------------------------------------------------------

struct MatchCounts {
  uint64_t tp = 0, fp = 0, fn = 0;

  bool empty() const { return tp == 0 && fp == 0 && fn == 0; }
  /// 2TP / (2TP + FP + FN); nullopt when all counts are zero.
  std::optional<double> f1() const;
  MatchCounts& operator+=(const MatchCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  bool operator==(const MatchCounts&) const = default;
};

using ClassCounts = std::array<MatchCounts, tensorio::kTargetClasses.size()>;

inline constexpr double kDefaultIouThreshold = 0.5;

/// Per-class greedy one-to-one matching. Candidate pairs with IoU >= thresh
/// are taken in descending IoU order, ties by (src index, gen index).
ClassCounts match_boxes(const DetectionSet& src, const DetectionSet& gen,
                        double iou_thresh = kDefaultIouThreshold);

/// Matched (src, gen) index pairs for one class, in acceptance order.
std::vector<std::pair<int, int>> greedy_match(std::span<const Box> src,
                                              std::span<const Box> gen,
                                              double iou_thresh);

ClassCounts& accumulate(ClassCounts& total, const ClassCounts& add);

/// Macro mean of per-class F1 over classes with any count. Throws MetricError
/// when every class is empty.
double object_f1(const ClassCounts& counts);

}  // namespace augkit::structmetrics
