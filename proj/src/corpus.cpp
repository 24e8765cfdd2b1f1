#include "cral/corpus.h"

#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "cral/error.h"
#include "cral/text.h"

namespace cral {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return cols;
}

bool is_word_id(std::string_view id) {
  if (id.empty()) return false;
  for (char c : id) {
    if (c < '0' || c > '9') return false;
  }
  return true;
}

std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

}  // namespace

std::size_t Corpus::token_count() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.tokens.size();
  return n;
}

bool Corpus::fully_gold() const {
  for (const auto& s : sentences) {
    for (const auto& t : s.tokens) {
      if (!t.boundary && !t.gold) return false;
    }
  }
  return true;
}

std::string make_type_key(std::string_view surface, const ConlluOptions& options) {
  return options.case_fold ? text::case_fold(surface) : std::string(surface);
}

Corpus parse_conllu(std::string_view text, const ConlluOptions& options) {
  Corpus corpus;
  Sentence current;
  std::string pending_id;
  std::unordered_set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t block_start = 1;

  auto finish = [&]() {
    if (current.tokens.empty()) {
      pending_id.clear();
      return;
    }
    current.id = pending_id.empty() ? "s" + std::to_string(corpus.sentences.size() + 1)
                                    : pending_id;
    if (!ids.insert(current.id).second) {
      throw ParseError(block_start, "duplicate sentence id '" + current.id + "'");
    }
    corpus.sentences.push_back(std::move(current));
    current = Sentence{};
    pending_id.clear();
  };

  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line =
        nl == std::string_view::npos ? text.substr(pos) : text.substr(pos, nl - pos);
    const bool last = nl == std::string_view::npos;
    pos = last ? text.size() + 1 : nl + 1;
    ++line_no;
    line = trim_cr(line);
    if (last && line.empty()) break;

    if (line.empty()) {
      finish();
      block_start = line_no + 1;
      continue;
    }
    if (line.front() == '#') {
      constexpr std::string_view kSentId = "# sent_id = ";
      if (line.substr(0, kSentId.size()) == kSentId) {
        pending_id = std::string(line.substr(kSentId.size()));
      }
      continue;
    }
    auto cols = split_tabs(line);
    if (cols.size() != 10) {
      throw ParseError(line_no, "expected 10 tab-separated columns, found " +
                                    std::to_string(cols.size()));
    }
    // Multiword ranges ("3-4") and empty nodes ("5.1") are not syntactic words.
    if (!is_word_id(cols[0])) continue;
    if (cols[1].empty()) throw ParseError(line_no, "empty FORM column");

    Token token;
    token.surface = std::string(cols[1]);
    token.type_key = make_type_key(token.surface, options);
    if (cols[3] != "_") {
      auto tag = TagSet::find(cols[3]);
      if (!tag) throw ParseError(line_no, "unknown UPOS tag '" + std::string(cols[3]) + "'");
      token.gold = *tag;
    }
    current.tokens.push_back(std::move(token));
  }
  finish();
  return corpus;
}

Corpus read_conllu_file(const std::string& path, const ConlluOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  Corpus corpus = parse_conllu(buffer.str(), options);
  corpus.provenance.push_back(path);
  return corpus;
}

std::string write_conllu(const Corpus& corpus, const AnnotationStore& store,
                         const WriteOptions& options) {
  std::string out;
  for (std::size_t i = 0; i < corpus.sentences.size(); ++i) {
    const auto& sentence = corpus.sentences[i];
    out += "# sent_id = " + sentence.id + "\n";
    std::size_t word = 0;
    for (std::size_t t = 0; t < sentence.tokens.size(); ++t) {
      const auto& token = sentence.tokens[t];
      if (token.boundary) continue;
      std::string_view upos = "_";
      if (auto tag = store.tag({i, t})) {
        upos = TagSet::symbol(*tag);
      } else if (options.include_gold && token.gold) {
        upos = TagSet::symbol(*token.gold);
      }
      out += std::to_string(++word);
      out += '\t';
      out += token.surface;
      out += "\t_\t";
      out += upos;
      out += "\t_\t_\t_\t_\t_\t_\n";
    }
    out += '\n';
  }
  return out;
}

TypeIndex::TypeIndex(const Corpus& corpus) {
  for (std::size_t i = 0; i < corpus.sentences.size(); ++i) {
    const auto& tokens = corpus.sentences[i].tokens;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      postings_[tokens[t].type_key].push_back({i, t});
    }
  }
}

const std::vector<Position>& TypeIndex::postings(const std::string& type_key) const {
  static const std::vector<Position> kEmpty;
  auto it = postings_.find(type_key);
  return it == postings_.end() ? kEmpty : it->second;
}

std::size_t TypeIndex::frequency(const std::string& type_key) const {
  return postings(type_key).size();
}

bool TypeIndex::contains(const std::string& type_key) const {
  return postings_.count(type_key) != 0;
}

std::size_t TypeIndex::total_frequency() const {
  std::size_t n = 0;
  for (const auto& [key, list] : postings_) n += list.size();
  return n;
}

TypeIndex build_type_index(const Corpus& corpus) { return TypeIndex(corpus); }

AnnotationStore::AnnotationStore(const Corpus& corpus) {
  lengths_.reserve(corpus.sentences.size());
  for (const auto& s : corpus.sentences) lengths_.push_back(s.tokens.size());
}

void AnnotationStore::check(Position pos) const {
  if (pos.sentence >= lengths_.size() || pos.token >= lengths_[pos.sentence]) {
    throw InvalidArgument("annotation position (" + std::to_string(pos.sentence) + ", " +
                          std::to_string(pos.token) + ") is outside the corpus");
  }
}

void AnnotationStore::insert(Position pos, TagId tag, AnnotationMeta meta) {
  check(pos);
  TagSet::symbol(tag);
  if (!entries_.emplace(pos, Annotation{tag, std::move(meta)}).second) {
    throw InvalidArgument("position (" + std::to_string(pos.sentence) + ", " +
                          std::to_string(pos.token) + ") is already annotated");
  }
}

void AnnotationStore::assign(Position pos, TagId tag, AnnotationMeta meta) {
  check(pos);
  TagSet::symbol(tag);
  entries_[pos] = Annotation{tag, std::move(meta)};
}

std::optional<TagId> AnnotationStore::tag(Position pos) const {
  auto it = entries_.find(pos);
  if (it == entries_.end()) return std::nullopt;
  return it->second.tag;
}

std::vector<std::size_t> AnnotationStore::labeled_sentences() const {
  std::vector<std::size_t> out;
  for (const auto& [pos, entry] : entries_) {
    if (out.empty() || out.back() != pos.sentence) out.push_back(pos.sentence);
  }
  return out;
}

std::map<std::size_t, TagId> AnnotationStore::constraints(std::size_t sentence) const {
  std::map<std::size_t, TagId> out;
  for (auto it = entries_.lower_bound({sentence, 0});
       it != entries_.end() && it->first.sentence == sentence; ++it) {
    out.emplace(it->first.token, it->second.tag);
  }
  return out;
}

Corpus add_language_tags(const Corpus& corpus, const std::string& code,
                         const ConlluOptions& options) {
  if (code.empty()) throw InvalidArgument("language code must be non-empty");
  Corpus out;
  out.provenance = corpus.provenance;
  const std::string marker = "<" + code + ">";
  Token boundary{marker, make_type_key(marker, options), tags::X, true};
  for (const auto& s : corpus.sentences) {
    Sentence tagged;
    tagged.id = s.id;
    tagged.language = code;
    tagged.tokens.reserve(s.tokens.size() + 2);
    tagged.tokens.push_back(boundary);
    tagged.tokens.insert(tagged.tokens.end(), s.tokens.begin(), s.tokens.end());
    tagged.tokens.push_back(boundary);
    out.sentences.push_back(std::move(tagged));
  }
  return out;
}

Corpus concat_with_language_tags(const std::vector<std::pair<Corpus, std::string>>& corpora,
                                 const ConlluOptions& options) {
  Corpus out;
  std::set<std::string> seen;
  for (const auto& [corpus, code] : corpora) {
    Corpus tagged = add_language_tags(corpus, code, options);
    for (auto& s : tagged.sentences) {
      if (seen.count(s.id)) s.id = code + ":" + s.id;
      seen.insert(s.id);
      out.sentences.push_back(std::move(s));
    }
    out.provenance.insert(out.provenance.end(), tagged.provenance.begin(),
                          tagged.provenance.end());
  }
  return out;
}

std::map<TagId, double> gold_tag_distribution(const std::string& type_key, const Corpus& corpus,
                                              const TypeIndex& index) {
  const auto& postings = index.postings(type_key);
  std::map<TagId, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& pos : postings) {
    const auto& token = corpus.sentences[pos.sentence].tokens[pos.token];
    if (token.boundary) continue;
    if (!token.gold) {
      throw InvalidArgument("occurrence of '" + type_key + "' at sentence " +
                            corpus.sentences[pos.sentence].id + " has no gold tag");
    }
    ++counts[*token.gold];
    ++total;
  }
  if (total == 0) throw InvalidArgument("type '" + type_key + "' does not occur in the corpus");
  std::map<TagId, double> dist;
  for (const auto& [tag, n] : counts) {
    dist[tag] = static_cast<double>(n) / static_cast<double>(total);
  }
  return dist;
}

std::map<TagId, double> gold_tag_distribution(const std::string& type_key, const Corpus& corpus) {
  return gold_tag_distribution(type_key, corpus, TypeIndex(corpus));
}

}  // namespace cral
