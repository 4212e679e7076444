#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "augkit/tensor_io.hpp"

// CLIP-R-Precision over precomputed image and prompt embeddings.
namespace augkit::textalign {

inline constexpr std::size_t kCandidates = 100;

double cosine_similarity(std::span<const double> u, std::span<const double> v);

/// One generated image, its matched prompt and 99 mismatched prompts.
struct AlignmentRecord {
  std::vector<double> image;
  std::vector<double> matched;
  std::vector<std::vector<double>> mismatched;

  /// Throws ValidationError unless there are exactly 100 candidates of equal
  /// dimension.
  void validate() const;
};

/// 1-based rank of the matched prompt among all candidates sorted by cosine
/// similarity, descending. The matched prompt is candidate 0 and wins ties.
int rank_prompts(const AlignmentRecord& record);

/// Fraction of ranks <= k.
double r_precision(std::span<const int> ranks, int k);
double r_precision(std::span<const AlignmentRecord> records, int k);

/// Builds records where each mismatched set is drawn without replacement
/// from the other records' matched prompts. Needs at least 100 records.
std::vector<AlignmentRecord> build_records(
    const std::vector<std::vector<double>>& image_embs,
    const std::vector<std::vector<double>>& prompt_embs, uint64_t seed);

/// Decodes an ACTF tensor [N,C,d]: slot 0 is the image embedding, slot 1 the
/// matched prompt, slots 2.. the mismatched prompts. With C == 2 the
/// mismatches are drawn from the pool via build_records.
std::vector<AlignmentRecord> records_from_tensor(const tensorio::Tensor& t,
                                                 uint64_t seed);

}  // namespace augkit::textalign
