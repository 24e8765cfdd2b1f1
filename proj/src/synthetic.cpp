#include "cral/synthetic.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "cral/error.h"
#include "cral/nn.h"

namespace cral {

namespace {

struct Morphology {
  std::string noun_plural, verb_plural, verb_third, verb_past, adjective, adverb;
  // Suffix of the adjectives that double as adverbs.
  std::string flat_adverb;
};

struct WeightedForms {
  std::vector<std::string> forms;
  std::vector<double> cumulative;

  void add(std::string form, double weight) {
    forms.push_back(std::move(form));
    cumulative.push_back((cumulative.empty() ? 0.0 : cumulative.back()) + weight);
  }
  const std::string& sample(nn::Rng& rng) const {
    const double u = rng.uniform() * cumulative.back();
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    return forms[static_cast<std::size_t>(it - cumulative.begin())];
  }
};

struct FunctionWords {
  WeightedForms det, pron, adp, part, adv;
};

Morphology morphology(int variant) {
  switch (variant) {
    case 0: return {"en", "en", "t", "de", "ig", "lo", "lich"};
    case 1: return {"er", "en", "t", "te", "ig", "lo", "lich"};
    case 2: return {"es", "an", "th", "de", "ik", "le", "lik"};
  }
  throw InvalidArgument("unknown synthetic variant " + std::to_string(variant));
}

FunctionWords function_words(int variant) {
  FunctionWords f;
  auto fill = [](WeightedForms& w, std::initializer_list<std::pair<const char*, double>> items) {
    for (const auto& [form, weight] : items) w.add(form, weight);
  };
  switch (variant) {
    case 0:
      fill(f.det, {{"di", 0.45}, {"en", 0.30}, {"das", 0.25}});
      // "de" is a determiner in the first source language.
      fill(f.pron, {{"ik", 0.25}, {"de", 0.25}, {"se", 0.20}, {"das", 0.30}});
      fill(f.adp, {{"in", 0.35}, {"op", 0.25}, {"zu", 0.25}, {"met", 0.15}});
      fill(f.part, {{"zu", 0.60}, {"nit", 0.40}});
      // "mit" is a preposition in the second source language.
      fill(f.adv, {{"so", 0.50}, {"mit", 0.50}});
      break;
    case 1:
      fill(f.det, {{"de", 0.45}, {"en", 0.30}, {"dat", 0.25}});
      fill(f.pron, {{"ik", 0.30}, {"du", 0.20}, {"se", 0.20}, {"dat", 0.30}});
      fill(f.adp, {{"in", 0.35}, {"op", 0.25}, {"to", 0.25}, {"met", 0.15}});
      fill(f.part, {{"te", 0.60}, {"nit", 0.40}});
      fill(f.adv, {{"so", 0.50}, {"da", 0.50}});
      break;
    case 2:
      fill(f.det, {{"di", 0.45}, {"een", 0.30}, {"das", 0.25}});
      fill(f.pron, {{"ich", 0.30}, {"du", 0.20}, {"sie", 0.20}, {"es", 0.30}});
      fill(f.adp, {{"in", 0.35}, {"auf", 0.25}, {"zu", 0.25}, {"mit", 0.15}});
      fill(f.part, {{"to", 0.60}, {"nich", 0.40}});
      fill(f.adv, {{"so", 0.50}, {"do", 0.50}});
      break;
    default:
      throw InvalidArgument("unknown synthetic variant " + std::to_string(variant));
  }
  return f;
}

// Stem inventory shared by every member of a family.
struct Stems {
  std::vector<std::string> noun_only, verb_only, noun_verb, adj_only, adj_adv, adv_only;
};

Stems make_stems(std::uint64_t family_seed) {
  static const std::string onsets = "bdfgklmnprstvwz";
  static const std::string vowels = "aeiou";
  static const std::string codas = "nrlst";
  nn::Rng rng(family_seed);
  std::set<std::string> used = {"di",  "en", "das", "ik",  "du", "se",  "in",  "op",  "zu",
                                "met", "nit", "so", "da",  "de", "dat", "to",  "te",  "een",
                                "ich", "sie", "es", "auf", "mit", "nich", "do"};
  auto fresh = [&]() {
    for (;;) {
      std::string s;
      const int syllables = rng.bernoulli(0.3) ? 3 : 2;
      for (int i = 0; i < syllables; ++i) {
        s += onsets[rng.below(onsets.size())];
        s += vowels[rng.below(vowels.size())];
      }
      if (rng.bernoulli(0.5)) s += codas[rng.below(codas.size())];
      if (used.insert(s).second) return s;
    }
  };
  Stems st;
  auto fill = [&](std::vector<std::string>& v, int n) {
    for (int i = 0; i < n; ++i) v.push_back(fresh());
  };
  fill(st.noun_only, 150);
  fill(st.verb_only, 100);
  fill(st.noun_verb, 300);
  fill(st.adj_only, 60);
  fill(st.adj_adv, 40);
  fill(st.adv_only, 20);
  return st;
}

// Lexeme lists in frequency-rank order for each open class.
struct OpenClasses {
  std::vector<std::string> nouns, verbs;
  std::vector<std::pair<std::string, bool>> adjectives;  // (stem, doubles as adverb)
  // Adverb lexemes are either pure adverb stems or adjective stems used bare.
  std::vector<std::pair<std::string, bool>> adverbs;  // (stem, from adjective)
};

OpenClasses open_classes(const Stems& st, std::uint64_t family_seed) {
  nn::Rng rng(family_seed ^ 0xC0FFEEULL);
  OpenClasses oc;
  oc.nouns = st.noun_only;
  oc.nouns.insert(oc.nouns.end(), st.noun_verb.begin(), st.noun_verb.end());
  oc.verbs = st.verb_only;
  oc.verbs.insert(oc.verbs.end(), st.noun_verb.begin(), st.noun_verb.end());
  for (const auto& s : st.adj_only) oc.adjectives.emplace_back(s, false);
  for (const auto& s : st.adj_adv) oc.adjectives.emplace_back(s, true);
  for (const auto& s : st.adv_only) oc.adverbs.emplace_back(s, false);
  for (const auto& s : st.adj_adv) oc.adverbs.emplace_back(s, true);
  rng.shuffle(oc.nouns.begin(), oc.nouns.end());
  rng.shuffle(oc.verbs.begin(), oc.verbs.end());
  rng.shuffle(oc.adjectives.begin(), oc.adjectives.end());
  rng.shuffle(oc.adverbs.begin(), oc.adverbs.end());
  return oc;
}

WeightedForms zipf(const std::vector<std::string>& items, double exponent) {
  WeightedForms w;
  for (std::size_t r = 0; r < items.size(); ++r) {
    w.add(items[r], 1.0 / std::pow(static_cast<double>(r) + 2.0, exponent));
  }
  return w;
}

class Generator {
 public:
  Generator(const SyntheticOptions& o)
      : opt_(o),
        morph_(morphology(o.variant)),
        fn_(function_words(o.variant)),
        classes_(open_classes(make_stems(o.family_seed), o.family_seed)),
        rng_(o.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(o.variant) + 1) {
    nouns_ = zipf(classes_.nouns, o.zipf_exponent);
    verbs_ = zipf(classes_.verbs, o.zipf_exponent);
    std::vector<std::string> adjective_forms;
    for (const auto& [stem, flat] : classes_.adjectives) {
      adjective_forms.push_back(stem + (flat ? morph_.flat_adverb : morph_.adjective));
    }
    adjectives_ = zipf(adjective_forms, o.zipf_exponent);
    std::vector<std::string> adverb_forms;
    for (const auto& [stem, from_adj] : classes_.adverbs) {
      adverb_forms.push_back(stem + (from_adj ? morph_.flat_adverb : morph_.adverb));
    }
    adverbs_ = zipf(adverb_forms, o.zipf_exponent);
  }

  Sentence sentence(std::size_t n) {
    Sentence s;
    s.id = opt_.id_prefix + "-" + std::to_string(n + 1);
    if (rng_.bernoulli(0.15)) push(s, fn_.adv.sample(rng_), tags::ADV);
    if (rng_.bernoulli(0.6)) noun_phrase(s);
    else push(s, fn_.pron.sample(rng_), tags::PRON);
    // Content adverbs sit right after the verb or at the end of the clause.
    const double adverb = rng_.uniform();
    verb_phrase(s, adverb < 0.1);
    if (rng_.bernoulli(0.4)) {
      push(s, fn_.adp.sample(rng_), tags::ADP);
      noun_phrase(s);
    }
    if (adverb >= 0.1 && adverb < 0.2) push(s, adverbs_.sample(rng_), tags::ADV);
    auto& first = s.tokens.front().surface;
    first[0] = static_cast<char>(first[0] - 'a' + 'A');
    s.tokens.front().type_key = make_type_key(first);
    return s;
  }

 private:
  void push(Sentence& s, const std::string& form, TagId tag) {
    s.tokens.push_back({form, make_type_key(form), tag, false});
  }

  void noun_phrase(Sentence& s) {
    push(s, fn_.det.sample(rng_), tags::DET);
    if (rng_.bernoulli(0.35)) push(s, adjectives_.sample(rng_), tags::ADJ);
    const std::string& stem = nouns_.sample(rng_);
    push(s, rng_.bernoulli(0.6) ? stem : stem + morph_.noun_plural, tags::NOUN);
  }

  void verb_phrase(Sentence& s, bool adverb) {
    const bool particle = rng_.bernoulli(0.25);
    if (particle) push(s, fn_.part.sample(rng_), tags::PART);
    const std::string& stem = verbs_.sample(rng_);
    std::string form = stem;
    if (!particle) {
      const double u = rng_.uniform();
      if (u < 0.30) form = stem;
      else if (u < 0.55) form = stem + morph_.verb_plural;
      else if (u < 0.80) form = stem + morph_.verb_third;
      else form = stem + morph_.verb_past;
    }
    push(s, form, tags::VERB);
    if (adverb) push(s, adverbs_.sample(rng_), tags::ADV);
    if (rng_.bernoulli(0.6)) {
      if (rng_.bernoulli(0.7)) noun_phrase(s);
      else push(s, fn_.pron.sample(rng_), tags::PRON);
    }
  }

  SyntheticOptions opt_;
  Morphology morph_;
  FunctionWords fn_;
  OpenClasses classes_;
  nn::Rng rng_;
  WeightedForms nouns_, verbs_, adjectives_, adverbs_;
};

}  // namespace

Corpus generate_synthetic(const SyntheticOptions& options) {
  if (options.variant < 0 || options.variant >= kSyntheticVariants) {
    throw InvalidArgument("synthetic variant must lie in [0, " +
                          std::to_string(kSyntheticVariants) + ")");
  }
  if (!(options.zipf_exponent > 0.0)) throw InvalidArgument("zipf exponent must be positive");
  Generator gen(options);
  Corpus c;
  c.sentences.reserve(options.sentences);
  for (std::size_t i = 0; i < options.sentences; ++i) c.sentences.push_back(gen.sentence(i));
  c.provenance.push_back("synthetic variant " + std::to_string(options.variant) + " seed " +
                         std::to_string(options.seed));
  return c;
}

SyntheticLexiconStats synthetic_lexicon_stats(std::uint64_t family_seed, int variant) {
  const Morphology m = morphology(variant);
  const FunctionWords f = function_words(variant);
  const Stems st = make_stems(family_seed);
  std::map<std::string, std::set<TagId>> tags_of;
  auto add = [&](const std::string& form, TagId tag) { tags_of[form].insert(tag); };
  for (const auto& w : f.det.forms) add(w, tags::DET);
  for (const auto& w : f.pron.forms) add(w, tags::PRON);
  for (const auto& w : f.adp.forms) add(w, tags::ADP);
  for (const auto& w : f.part.forms) add(w, tags::PART);
  for (const auto& w : f.adv.forms) add(w, tags::ADV);
  auto nouns = st.noun_only;
  nouns.insert(nouns.end(), st.noun_verb.begin(), st.noun_verb.end());
  for (const auto& s : nouns) {
    add(s, tags::NOUN);
    add(s + m.noun_plural, tags::NOUN);
  }
  auto verbs = st.verb_only;
  verbs.insert(verbs.end(), st.noun_verb.begin(), st.noun_verb.end());
  for (const auto& s : verbs) {
    for (const auto& suffix : {std::string(), m.verb_plural, m.verb_third, m.verb_past}) {
      add(s + suffix, tags::VERB);
    }
  }
  for (const auto& s : st.adj_only) add(s + m.adjective, tags::ADJ);
  for (const auto& s : st.adj_adv) {
    add(s + m.flat_adverb, tags::ADJ);
    add(s + m.flat_adverb, tags::ADV);
  }
  for (const auto& s : st.adv_only) add(s + m.adverb, tags::ADV);
  SyntheticLexiconStats out;
  out.types = tags_of.size();
  for (const auto& [form, set] : tags_of) out.syncretic_types += set.size() >= 2;
  return out;
}

}  // namespace cral
