#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cral/tagset.h"

namespace cral {

struct Token {
  std::string surface;
  std::string type_key;
  std::optional<TagId> gold;
  // Synthetic language-ID marker; never a selection candidate, never scored.
  bool boundary = false;
};

struct Sentence {
  std::string id;
  std::vector<Token> tokens;
  std::string language;

  std::size_t size() const { return tokens.size(); }
};

struct Corpus {
  std::vector<Sentence> sentences;
  std::vector<std::string> provenance;

  std::size_t size() const { return sentences.size(); }
  std::size_t token_count() const;
  // True when every non-boundary token carries a gold tag.
  bool fully_gold() const;
};

// A token occurrence: (sentence index, token index).
struct Position {
  std::size_t sentence = 0;
  std::size_t token = 0;
  auto operator<=>(const Position&) const = default;
};

struct ConlluOptions {
  // Type keys are the case-folded surface when set, the raw surface otherwise.
  bool case_fold = true;
};

std::string make_type_key(std::string_view surface, const ConlluOptions& options = {});

// Throws ParseError (with the 1-based line number) on malformed input.
Corpus parse_conllu(std::string_view text, const ConlluOptions& options = {});
Corpus read_conllu_file(const std::string& path, const ConlluOptions& options = {});

class AnnotationStore;

struct WriteOptions {
  // Fall back to the gold tag for tokens without a stored annotation.
  bool include_gold = false;
};

// Boundary tokens are not written.
std::string write_conllu(const Corpus& corpus, const AnnotationStore& store,
                         const WriteOptions& options = {});

// Every token of the corpus appears in exactly one posting list.
class TypeIndex {
 public:
  TypeIndex() = default;
  explicit TypeIndex(const Corpus& corpus);

  // Postings sorted by position.
  const std::vector<Position>& postings(const std::string& type_key) const;
  std::size_t frequency(const std::string& type_key) const;
  bool contains(const std::string& type_key) const;
  std::size_t type_count() const { return postings_.size(); }
  std::size_t total_frequency() const;

  // Types in lexicographic key order.
  const std::map<std::string, std::vector<Position>>& entries() const { return postings_; }

 private:
  std::map<std::string, std::vector<Position>> postings_;
};

TypeIndex build_type_index(const Corpus& corpus);

struct AnnotationMeta {
  int iteration = 0;
  std::string annotator = "simulated";
  std::int64_t elapsed_ms = 0;
};

struct Annotation {
  TagId tag = 0;
  AnnotationMeta meta;
};

// Sparse token-level labels over a fixed corpus shape.
class AnnotationStore {
 public:
  AnnotationStore() = default;
  explicit AnnotationStore(const Corpus& corpus);

  // Throws InvalidArgument for out-of-range positions or repeated positions.
  void insert(Position pos, TagId tag, AnnotationMeta meta = {});
  // Overwrites an existing entry (or inserts); used for open-batch corrections.
  void assign(Position pos, TagId tag, AnnotationMeta meta = {});

  std::optional<TagId> tag(Position pos) const;
  bool contains(Position pos) const { return entries_.count(pos) != 0; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::map<Position, Annotation>& entries() const { return entries_; }

  // Sentence indices that hold at least one annotation, ascending.
  std::vector<std::size_t> labeled_sentences() const;
  // token index -> required tag for one sentence.
  std::map<std::size_t, TagId> constraints(std::size_t sentence) const;

 private:
  void check(Position pos) const;

  std::vector<std::size_t> lengths_;
  std::map<Position, Annotation> entries_;
};

// Adds "<code>" boundary tokens (gold X) around every sentence and namespaces
// sentence ids by language when they collide.
Corpus concat_with_language_tags(const std::vector<std::pair<Corpus, std::string>>& corpora,
                                 const ConlluOptions& options = {});

// Wraps a single corpus the same way.
Corpus add_language_tags(const Corpus& corpus, const std::string& code,
                         const ConlluOptions& options = {});

// Proportion of each gold tag over all occurrences of the type.
std::map<TagId, double> gold_tag_distribution(const std::string& type_key, const Corpus& corpus);
std::map<TagId, double> gold_tag_distribution(const std::string& type_key, const Corpus& corpus,
                                              const TypeIndex& index);

}  // namespace cral
