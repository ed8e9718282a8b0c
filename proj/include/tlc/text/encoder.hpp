// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tlc/common/rng.hpp"
#include "tlc/nn/graph.hpp"

namespace tlc::text {

inline constexpr int kNumBuckets = 4096;
inline constexpr int kEmbeddingDim = 512;

/// Lowercases ASCII, drops ASCII punctuation and splits on whitespace.
std::vector<std::string> tokenize(std::string_view text);

/// Bucket of one n-gram: FNV-1a-64 of the tokens joined by single spaces, mod `buckets`.
int bucket_of(std::string_view ngram, int buckets = kNumBuckets);

/// Unigram and bigram counts hashed into buckets, L2-normalized. Sorted by
/// bucket; empty for text without tokens.
std::vector<std::pair<int, double>> bucket_vector(std::string_view text, int buckets = kNumBuckets);

/// Learned projection of the bucket vector. Its parameters live in the store
/// of the model that trains it.
struct TextEncoder {
  nn::ParamId weight = -1;  // buckets x dim
  nn::ParamId bias = -1;    // 1 x dim
  int buckets = kNumBuckets;
  int dim = kEmbeddingDim;

  static TextEncoder create(nn::ParamStore& store, const std::string& name, CounterRng& rng,
                            int buckets = kNumBuckets, int dim = kEmbeddingDim);
  /// 1 x dim embedding node.
  nn::Var operator()(nn::Graph& g, const nn::ParamStore& store, std::string_view text) const;
  /// Plain evaluation; "" yields the bias row.
  RowVec embed(const nn::ParamStore& store, std::string_view text) const;
};

}  // namespace tlc::text
