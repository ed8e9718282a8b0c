// SPDX-License-Identifier: Apache-2.0
#include "tlc/text/encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "tlc/common/hash.hpp"
#include "tlc/nn/layers.hpp"
#include "tlc/nn/ops.hpp"

namespace tlc::text {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (u < 0x80 && std::isspace(u)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else if (u < 0x80 && std::ispunct(u)) {
      continue;
    } else {
      current.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : ch);
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

int bucket_of(std::string_view ngram, int buckets) {
  return static_cast<int>(fnv1a64(ngram) % static_cast<std::uint64_t>(buckets));
}

std::vector<std::pair<int, double>> bucket_vector(std::string_view text, int buckets) {
  const auto tokens = tokenize(text);
  std::map<int, double> counts;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    counts[bucket_of(tokens[i], buckets)] += 1.0;
    if (i + 1 < tokens.size()) counts[bucket_of(tokens[i] + " " + tokens[i + 1], buckets)] += 1.0;
  }
  double norm = 0.0;
  for (const auto& [b, c] : counts) norm += c * c;
  norm = std::sqrt(norm);
  std::vector<std::pair<int, double>> out(counts.begin(), counts.end());
  for (auto& [b, c] : out) c /= norm;
  return out;
}

TextEncoder TextEncoder::create(nn::ParamStore& store, const std::string& name, CounterRng& rng,
                                int buckets, int dim) {
  TextEncoder e;
  e.buckets = buckets;
  e.dim = dim;
  // Inputs are unit-norm with a handful of active buckets, so scale as for a
  // small fan-in rather than the full bucket count.
  e.weight = store.add(name + ".weight", nn::uniform_init(buckets, dim, 16.0, rng));
  e.bias = store.add(name + ".bias", Mat::Zero(1, dim));
  return e;
}

nn::Var TextEncoder::operator()(nn::Graph& g, const nn::ParamStore& store,
                                std::string_view text) const {
  const auto input = bucket_vector(text, buckets);
  return nn::sparse_linear(input, g.param(store, weight), g.param(store, bias));
}

RowVec TextEncoder::embed(const nn::ParamStore& store, std::string_view text) const {
  RowVec out = store.value(bias);
  for (const auto& [b, w] : bucket_vector(text, buckets)) out += w * store.value(weight).row(b);
  return out;
}

}  // namespace tlc::text
