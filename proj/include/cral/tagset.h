#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace cral {

using TagId = int;

// The 17 Universal Dependencies UPOS tags, in alphabetical order. The order is
// part of the on-disk format (checkpoints, reports) and must not change.
class TagSet {
 public:
  static constexpr int kSize = 17;
  static constexpr std::array<std::string_view, kSize> kSymbols = {
      "ADJ",  "ADP",  "ADV",   "AUX",   "CCONJ", "DET",  "INTJ", "NOUN", "NUM",
      "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM",  "VERB", "X"};

  static constexpr int size() { return kSize; }
  static std::string_view symbol(TagId id);
  static std::optional<TagId> find(std::string_view symbol);
  // Throws InvalidArgument naming the symbol.
  static TagId index(std::string_view symbol);
};

namespace tags {
inline constexpr TagId ADJ = 0, ADP = 1, ADV = 2, AUX = 3, CCONJ = 4, DET = 5,
                       INTJ = 6, NOUN = 7, NUM = 8, PART = 9, PRON = 10,
                       PROPN = 11, PUNCT = 12, SCONJ = 13, SYM = 14, VERB = 15,
                       X = 16;
}

}  // namespace cral
