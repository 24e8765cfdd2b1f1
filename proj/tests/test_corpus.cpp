#include <gtest/gtest.h>

#include <set>

#include "cral/corpus.h"
#include "cral/error.h"

namespace cral {
namespace {

std::string line(int id, const std::string& form, const std::string& upos) {
  return std::to_string(id) + "\t" + form + "\t_\t" + upos + "\t_\t_\t_\t_\t_\t_\n";
}

TEST(TagSet, SeventeenAlphabeticalSymbols) {
  ASSERT_EQ(TagSet::kSize, 17);
  for (TagId t = 0; t < TagSet::kSize; ++t) {
    EXPECT_EQ(TagSet::find(TagSet::symbol(t)), t);
    if (t > 0) EXPECT_LT(TagSet::symbol(t - 1), TagSet::symbol(t));
  }
  EXPECT_EQ(TagSet::symbol(0), "ADJ");
  EXPECT_EQ(TagSet::symbol(16), "X");
  EXPECT_FALSE(TagSet::find("NN").has_value());
}

TEST(Conllu, ReadsFormAndUpos) {
  const Corpus c = parse_conllu(line(1, "die", "DET"));
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c.sentences[0].tokens[0].surface, "die");
  EXPECT_EQ(c.sentences[0].tokens[0].gold, TagSet::index("DET"));
}

TEST(Conllu, UnderscoreMeansUnannotated) {
  const Corpus c = parse_conllu(line(1, "die", "_"));
  EXPECT_FALSE(c.sentences[0].tokens[0].gold.has_value());
}

TEST(Conllu, BlankLinesSeparateSentences) {
  const Corpus c = parse_conllu("# sent_id = a\n" + line(1, "x", "X") + "\n" + line(1, "y", "X") +
                                line(2, "z", "X") + "\n");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.sentences[0].id, "a");
  EXPECT_EQ(c.sentences[1].size(), 2u);
}

TEST(Conllu, SkipsMultiwordRangesAndEmptyNodes) {
  const std::string text = "1-2\tzum\t_\t_\t_\t_\t_\t_\t_\t_\n" + line(1, "zu", "ADP") +
                           line(2, "dem", "DET") + "2.1\tx\t_\tX\t_\t_\t_\t_\t_\t_\n";
  const Corpus c = parse_conllu(text);
  ASSERT_EQ(c.sentences[0].size(), 2u);
  EXPECT_EQ(c.sentences[0].tokens[0].surface, "zu");
}

TEST(Conllu, WrongColumnCountReportsLine) {
  try {
    parse_conllu(line(1, "a", "X") + "2\tb\t_\n");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Conllu, UnknownUposNamesSymbol) {
  try {
    parse_conllu(line(1, "a", "NN"));
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("NN"), std::string::npos);
  }
}

TEST(Conllu, WriteWithEmptyStoreLeavesUposBlank) {
  const Corpus c = parse_conllu(line(1, "a", "NOUN") + line(2, "b", "VERB"));
  const Corpus back = parse_conllu(write_conllu(c, AnnotationStore(c)));
  for (const auto& t : back.sentences[0].tokens) EXPECT_FALSE(t.gold.has_value());
}

TEST(Conllu, WriteCarriesOnlyStoredTag) {
  const Corpus c = parse_conllu(line(1, "a", "_") + line(2, "b", "_"));
  AnnotationStore store(c);
  store.insert({0, 1}, TagSet::index("DET"));
  const Corpus back = parse_conllu(write_conllu(c, store));
  EXPECT_FALSE(back.sentences[0].tokens[0].gold.has_value());
  EXPECT_EQ(back.sentences[0].tokens[1].gold, TagSet::index("DET"));
}

TEST(Conllu, ParseWriteParseIsIdempotent) {
  const Corpus c = parse_conllu(line(1, "Über", "ADP") + line(2, "die", "_") + "\n" +
                                line(1, "x", "X") + "\n");
  AnnotationStore store(c);
  store.insert({0, 1}, TagSet::index("PRON"));
  WriteOptions w;
  w.include_gold = true;
  const Corpus once = parse_conllu(write_conllu(c, store, w));
  const Corpus twice = parse_conllu(write_conllu(once, AnnotationStore(once), w));
  ASSERT_EQ(once.size(), twice.size());
  for (std::size_t i = 0; i < once.size(); ++i) {
    for (std::size_t t = 0; t < once.sentences[i].size(); ++t) {
      EXPECT_EQ(once.sentences[i].tokens[t].surface, twice.sentences[i].tokens[t].surface);
      EXPECT_EQ(once.sentences[i].tokens[t].gold, twice.sentences[i].tokens[t].gold);
    }
  }
  EXPECT_EQ(once.sentences[0].tokens[0].surface, "Über");
  EXPECT_EQ(once.sentences[0].tokens[1].gold, TagSet::index("PRON"));
}

TEST(TypeIndex, CountsRepeatedTypeAndFoldsCase) {
  const Corpus c = parse_conllu(line(1, "Die", "DET") + line(2, "Katze", "NOUN") +
                                line(3, "die", "PRON") + "\n");
  const TypeIndex index = build_type_index(c);
  EXPECT_EQ(index.frequency("die"), 2u);
  EXPECT_EQ(index.postings("die")[0], (Position{0, 0}));
  EXPECT_EQ(index.postings("die")[1], (Position{0, 2}));
  EXPECT_EQ(index.total_frequency(), c.token_count());
}

TEST(TypeIndex, EmptyCorpus) {
  EXPECT_EQ(build_type_index(Corpus{}).type_count(), 0u);
}

TEST(TypeKey, CaseFoldingIsUnicodeAware) {
  EXPECT_EQ(make_type_key("ÜBER"), make_type_key("über"));
  ConlluOptions raw;
  raw.case_fold = false;
  EXPECT_NE(make_type_key("Die", raw), make_type_key("die", raw));
}

TEST(LanguageTags, WrapEverySentence) {
  const Corpus de = parse_conllu(line(1, "a", "X") + line(2, "b", "X") + line(3, "c", "X"));
  const Corpus tagged = add_language_tags(de, "de");
  const auto& s = tagged.sentences[0];
  ASSERT_EQ(s.size(), 5u);
  EXPECT_EQ(s.tokens.front().surface, "<de>");
  EXPECT_EQ(s.tokens.back().surface, "<de>");
  EXPECT_TRUE(s.tokens.front().boundary);
  EXPECT_EQ(s.tokens.front().gold, TagSet::index("X"));
}

TEST(LanguageTags, ConcatenationRenamespacesCollidingIds) {
  const std::string two = "# sent_id = 1\n" + line(1, "a", "X") + "\n# sent_id = 2\n" +
                          line(1, "b", "X") + "\n";
  const std::string three = two + "# sent_id = 3\n" + line(1, "c", "X") + "\n";
  const Corpus c = concat_with_language_tags({{parse_conllu(two), "de"}, {parse_conllu(three), "nl"}});
  ASSERT_EQ(c.size(), 5u);
  std::set<std::string> ids;
  for (const auto& s : c.sentences) ids.insert(s.id);
  EXPECT_EQ(ids.size(), 5u);
}

TEST(LanguageTags, EveryTokenInExactlyOnePostingList) {
  const Corpus c = add_language_tags(parse_conllu(line(1, "a", "X") + line(2, "A", "X")), "de");
  const TypeIndex index(c);
  EXPECT_EQ(index.total_frequency(), c.token_count());
  EXPECT_EQ(index.frequency("<de>"), 2u);
  for (const auto& p : index.postings("<de>")) EXPECT_TRUE(c.sentences[p.sentence].tokens[p.token].boundary);
}

Corpus zu_corpus() {
  // ADP=194, PART=103, ADV=5, PROPN=5, ADJ=1 over single-token sentences.
  std::string text;
  const std::vector<std::pair<std::string, int>> counts = {
      {"ADP", 194}, {"PART", 103}, {"ADV", 5}, {"PROPN", 5}, {"ADJ", 1}};
  for (const auto& [tag, n] : counts) {
    for (int i = 0; i < n; ++i) text += line(1, "zu", tag) + "\n";
  }
  return parse_conllu(text);
}

TEST(GoldDistribution, ZuCounts) {
  const auto d = gold_tag_distribution("zu", zu_corpus());
  EXPECT_DOUBLE_EQ(d.at(TagSet::index("ADP")), 194.0 / 308.0);
  EXPECT_NEAR(d.at(TagSet::index("ADP")), 0.6299, 5e-5);
  double sum = 0.0;
  for (const auto& [t, p] : d) sum += p;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(GoldDistribution, SingletonAndEvenSplit) {
  const Corpus one = parse_conllu(line(1, "hund", "NOUN"));
  EXPECT_EQ(gold_tag_distribution("hund", one).at(TagSet::index("NOUN")), 1.0);
  const Corpus two = parse_conllu(line(1, "a", "ADJ") + line(2, "a", "ADV"));
  const auto d = gold_tag_distribution("a", two);
  EXPECT_EQ(d.at(TagSet::index("ADJ")), 0.5);
  EXPECT_EQ(d.at(TagSet::index("ADV")), 0.5);
}

TEST(GoldDistribution, Errors) {
  const Corpus c = parse_conllu(line(1, "a", "_"));
  EXPECT_THROW(gold_tag_distribution("b", c), InvalidArgument);
  EXPECT_THROW(gold_tag_distribution("a", c), InvalidArgument);
}

TEST(AnnotationStore, PositionAnnotatedAtMostOnce) {
  const Corpus c = parse_conllu(line(1, "a", "_"));
  AnnotationStore store(c);
  store.insert({0, 0}, 1);
  EXPECT_THROW(store.insert({0, 0}, 2), InvalidArgument);
  EXPECT_THROW(store.insert({0, 1}, 2), InvalidArgument);
  store.assign({0, 0}, 3);
  EXPECT_EQ(store.tag({0, 0}), 3);
  EXPECT_EQ(store.size(), 1u);
}

}  // namespace
}  // namespace cral
