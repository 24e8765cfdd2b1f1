#pragma once

#include <cstdint>
#include <string>

#include "cral/corpus.h"

namespace cral {

// A small family of related artificial languages over eight UPOS tags
// (DET NOUN VERB ADJ PRON ADP ADV PART). All members share stems and the
// phrase grammar; they differ in inflectional suffixes and in the spelling
// and ambiguity of a few frequent function words. Variant 0 is the target;
// variants 1 and 2 are the related source languages.
struct SyntheticOptions {
  // Seeds the shared lexicon; keep it fixed across the members of one family.
  std::uint64_t family_seed = 7;
  // Seeds sentence sampling.
  std::uint64_t seed = 1;
  std::size_t sentences = 2000;
  int variant = 0;
  // Prefix for sentence ids ("<prefix>-<n>").
  std::string id_prefix = "s";
  // Word frequencies within a class fall off as 1 / (rank + 2)^zipf_exponent.
  double zipf_exponent = 1.1;
};

inline constexpr int kSyntheticVariants = 3;

Corpus generate_synthetic(const SyntheticOptions& options);

struct SyntheticLexiconStats {
  std::size_t types = 0;
  // Forms the grammar can emit under at least two tags.
  std::size_t syncretic_types = 0;
  double syncretic_fraction() const {
    return types == 0 ? 0.0 : static_cast<double>(syncretic_types) / static_cast<double>(types);
  }
};

SyntheticLexiconStats synthetic_lexicon_stats(std::uint64_t family_seed, int variant);

}  // namespace cral
