#include "cral/tagger.h"

#include <cmath>

#include "cral/error.h"
#include "cral/text.h"

namespace cral {

namespace {

constexpr int kTags = TagSet::kSize;

struct WordForward {
  std::vector<Eigen::Index> chars;
  Eigen::MatrixXd emb_mask;
  nn::LstmCache char_f, char_b;
  Eigen::MatrixXd char_mask;
  nn::AttentionCache att;
  nn::LstmCache mod_f, mod_b;
  Eigen::MatrixXd word_mask;
};

struct SentenceForward {
  std::vector<WordForward> words;
  nn::LstmCache tok_f, tok_b;
  Eigen::MatrixXd mask_f, mask_b;
  EncoderStates states;
};

void apply_mask(Eigen::MatrixXd& m, const Eigen::MatrixXd& mask) {
  if (mask.size() != 0) m.array() *= mask.array();
}

std::vector<Eigen::Index> char_ids(const std::string& surface, int buckets) {
  std::vector<Eigen::Index> ids;
  for (char32_t c : text::decode_utf8(surface)) {
    ids.push_back(static_cast<Eigen::Index>(c % static_cast<char32_t>(buckets)));
  }
  if (ids.empty()) throw InvalidArgument("cannot encode an empty token");
  return ids;
}

// Character BiLSTM -> self-attention -> BiLSTM; returns the word vector.
Eigen::RowVectorXd word_forward(const std::string& surface, const TaggerParams& p, nn::Rng* rng,
                                WordForward* cache) {
  const auto& cfg = p.config;
  auto ids = char_ids(surface, cfg.char_buckets);
  const auto len = static_cast<Eigen::Index>(ids.size());
  Eigen::MatrixXd emb(len, cfg.char_embed_dim);
  for (Eigen::Index i = 0; i < len; ++i) emb.row(i) = p.char_embeddings.row(ids[static_cast<std::size_t>(i)]);

  Eigen::MatrixXd emb_mask, char_mask, word_mask;
  if (rng) emb_mask = nn::dropout_mask(len, cfg.char_embed_dim, cfg.dropout_char, *rng);
  apply_mask(emb, emb_mask);

  WordForward local;
  WordForward& wf = cache ? *cache : local;
  const bool keep = cache != nullptr;
  Eigen::MatrixXd s(len, 2 * cfg.char_hidden);
  s.leftCols(cfg.char_hidden) = nn::lstm_forward(p.char_lstm.fwd, emb, false, keep ? &wf.char_f : nullptr);
  s.rightCols(cfg.char_hidden) = nn::lstm_forward(p.char_lstm.bwd, emb, true, keep ? &wf.char_b : nullptr);
  if (rng) char_mask = nn::dropout_mask(len, 2 * cfg.char_hidden, cfg.dropout_outputs, *rng);
  apply_mask(s, char_mask);

  Eigen::MatrixXd u = nn::attention_forward(p.attention, s, keep ? &wf.att : nullptr);
  Eigen::MatrixXd mf = nn::lstm_forward(p.modeling_lstm.fwd, u, false, keep ? &wf.mod_f : nullptr);
  Eigen::MatrixXd mb = nn::lstm_forward(p.modeling_lstm.bwd, u, true, keep ? &wf.mod_b : nullptr);
  Eigen::MatrixXd word(1, 2 * cfg.modeling_hidden);
  word.leftCols(cfg.modeling_hidden) = mf.row(len - 1);
  word.rightCols(cfg.modeling_hidden) = mb.row(0);
  if (rng) word_mask = nn::dropout_mask(1, 2 * cfg.modeling_hidden, cfg.dropout_outputs, *rng);
  apply_mask(word, word_mask);

  if (keep) {
    wf.chars = std::move(ids);
    wf.emb_mask = std::move(emb_mask);
    wf.char_mask = std::move(char_mask);
    wf.word_mask = std::move(word_mask);
  }
  return word.row(0);
}

void word_backward(const TaggerParams& p, const WordForward& wf, Eigen::MatrixXd d_word,
                   TaggerParams& g) {
  const auto& cfg = p.config;
  const auto len = static_cast<Eigen::Index>(wf.chars.size());
  apply_mask(d_word, wf.word_mask);
  Eigen::MatrixXd dmf = Eigen::MatrixXd::Zero(len, cfg.modeling_hidden);
  Eigen::MatrixXd dmb = Eigen::MatrixXd::Zero(len, cfg.modeling_hidden);
  dmf.row(len - 1) = d_word.leftCols(cfg.modeling_hidden);
  dmb.row(0) = d_word.rightCols(cfg.modeling_hidden);
  Eigen::MatrixXd du = nn::lstm_backward(p.modeling_lstm.fwd, wf.mod_f, dmf, g.modeling_lstm.fwd);
  du += nn::lstm_backward(p.modeling_lstm.bwd, wf.mod_b, dmb, g.modeling_lstm.bwd);
  Eigen::MatrixXd ds = nn::attention_backward(p.attention, wf.att, du, g.attention);
  apply_mask(ds, wf.char_mask);
  Eigen::MatrixXd demb =
      nn::lstm_backward(p.char_lstm.fwd, wf.char_f, ds.leftCols(cfg.char_hidden), g.char_lstm.fwd);
  demb += nn::lstm_backward(p.char_lstm.bwd, wf.char_b, ds.rightCols(cfg.char_hidden),
                            g.char_lstm.bwd);
  apply_mask(demb, wf.emb_mask);
  for (Eigen::Index i = 0; i < len; ++i) {
    g.char_embeddings.row(wf.chars[static_cast<std::size_t>(i)]) += demb.row(i);
  }
}

EncoderStates token_forward(const Eigen::MatrixXd& words, const TaggerParams& p, nn::Rng* rng,
                            SentenceForward* cache) {
  const auto& cfg = p.config;
  const Eigen::Index n = words.rows();
  EncoderStates st;
  st.fwd = nn::lstm_forward(p.token_lstm.fwd, words, false, cache ? &cache->tok_f : nullptr);
  st.bwd = nn::lstm_forward(p.token_lstm.bwd, words, true, cache ? &cache->tok_b : nullptr);
  if (rng) {
    Eigen::MatrixXd mf = nn::dropout_mask(n, cfg.token_hidden, cfg.dropout_outputs, *rng);
    Eigen::MatrixXd mb = nn::dropout_mask(n, cfg.token_hidden, cfg.dropout_outputs, *rng);
    apply_mask(st.fwd, mf);
    apply_mask(st.bwd, mb);
    if (cache) {
      cache->mask_f = std::move(mf);
      cache->mask_b = std::move(mb);
    }
  }
  return st;
}

SentenceForward sentence_forward(const Sentence& sentence, const TaggerParams& p, nn::Rng* rng) {
  if (sentence.tokens.empty()) throw InvalidArgument("cannot encode an empty sentence");
  SentenceForward sf;
  const auto n = static_cast<Eigen::Index>(sentence.tokens.size());
  sf.words.resize(sentence.tokens.size());
  Eigen::MatrixXd words(n, p.config.word_dim());
  for (Eigen::Index t = 0; t < n; ++t) {
    const auto i = static_cast<std::size_t>(t);
    words.row(t) = word_forward(sentence.tokens[i].surface, p, rng, &sf.words[i]);
  }
  sf.states = token_forward(words, p, rng, &sf);
  return sf;
}

void sentence_backward(const TaggerParams& p, const SentenceForward& sf, Eigen::MatrixXd d_fwd,
                       Eigen::MatrixXd d_bwd, TaggerParams& g) {
  apply_mask(d_fwd, sf.mask_f);
  apply_mask(d_bwd, sf.mask_b);
  Eigen::MatrixXd d_words = nn::lstm_backward(p.token_lstm.fwd, sf.tok_f, d_fwd, g.token_lstm.fwd);
  d_words += nn::lstm_backward(p.token_lstm.bwd, sf.tok_b, d_bwd, g.token_lstm.bwd);
  for (std::size_t t = 0; t < sf.words.size(); ++t) {
    word_backward(p, sf.words[t], d_words.row(static_cast<Eigen::Index>(t)), g);
  }
}

Eigen::MatrixXd full_emissions(const EncoderStates& st, const TaggerParams& p) {
  Eigen::MatrixXd e = st.fwd * p.emission.w.leftCols(p.config.token_hidden).transpose() +
                      st.bwd * p.emission.w.rightCols(p.config.token_hidden).transpose();
  e.rowwise() += p.emission.b.transpose();
  return e;
}

CrfParams effective_crf(const TaggerParams& p) {
  return p.config.decoder == Decoder::Crf ? p.crf : CrfParams::zeros(kTags);
}

// Input rows seen by an auxiliary view.
Eigen::MatrixXd view_input(const EncoderStates& st, const TaggerParams& p, View view) {
  const Eigen::Index n = st.fwd.rows();
  switch (view) {
    case View::Fwd:
      return st.fwd;
    case View::Bwd:
      return st.bwd;
    case View::Fut: {
      Eigen::MatrixXd in(n, p.config.token_hidden);
      in.row(0) = p.fut_boundary.transpose();
      if (n > 1) in.bottomRows(n - 1) = st.fwd.topRows(n - 1);
      return in;
    }
    case View::Pst: {
      Eigen::MatrixXd in(n, p.config.token_hidden);
      in.row(n - 1) = p.pst_boundary.transpose();
      if (n > 1) in.topRows(n - 1) = st.bwd.bottomRows(n - 1);
      return in;
    }
    case View::Full:
      break;
  }
  throw InvalidArgument("full view has no auxiliary head");
}

const nn::LinearParams& view_layer(const TaggerParams& p, View view) {
  switch (view) {
    case View::Fwd: return p.view_fwd;
    case View::Bwd: return p.view_bwd;
    case View::Fut: return p.view_fut;
    case View::Pst: return p.view_pst;
    case View::Full: break;
  }
  throw InvalidArgument("full view has no auxiliary head");
}

nn::LinearParams& view_layer(TaggerParams& p, View view) {
  return const_cast<nn::LinearParams&>(view_layer(static_cast<const TaggerParams&>(p), view));
}

Eigen::MatrixXd linear_rows(const Eigen::MatrixXd& in, const nn::LinearParams& layer) {
  Eigen::MatrixXd out = in * layer.w.transpose();
  out.rowwise() += layer.b.transpose();
  return out;
}

std::vector<TagId> row_argmax(const Eigen::MatrixXd& m) {
  std::vector<TagId> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index t = 0; t < m.rows(); ++t) {
    Eigen::Index arg = 0;
    m.row(t).maxCoeff(&arg);  // first maximum wins
    out[static_cast<std::size_t>(t)] = static_cast<TagId>(arg);
  }
  return out;
}

constexpr View kAuxViews[] = {View::Fwd, View::Bwd, View::Fut, View::Pst};

}  // namespace

void TaggerConfig::validate() const {
  if (char_embed_dim <= 0 || char_hidden <= 0 || modeling_hidden <= 0 || token_hidden <= 0 ||
      char_buckets <= 0) {
    throw InvalidArgument("tagger dimensions must be positive");
  }
  if (dropout_char < 0.0 || dropout_char >= 1.0 || dropout_outputs < 0.0 ||
      dropout_outputs >= 1.0) {
    throw InvalidArgument("dropout rates must lie in [0, 1)");
  }
  if (!(sgd_lr > 0.0)) throw InvalidArgument("learning rate must be positive");
}

const char* view_name(View v) {
  switch (v) {
    case View::Full: return "full";
    case View::Fwd: return "fwd";
    case View::Bwd: return "bwd";
    case View::Fut: return "fut";
    case View::Pst: return "pst";
  }
  return "?";
}

TaggerParams TaggerParams::zeros(const TaggerConfig& c) {
  c.validate();
  TaggerParams p;
  p.config = c;
  p.char_embeddings = Eigen::MatrixXd::Zero(c.char_buckets, c.char_embed_dim);
  p.char_lstm = nn::BiLstmParams::zeros(c.char_embed_dim, c.char_hidden);
  p.attention = nn::AttentionParams::zeros(c.attention_dim());
  p.modeling_lstm = nn::BiLstmParams::zeros(c.attention_dim(), c.modeling_hidden);
  p.token_lstm = nn::BiLstmParams::zeros(c.word_dim(), c.token_hidden);
  p.emission = nn::LinearParams::zeros(c.state_dim(), kTags);
  p.crf = CrfParams::zeros(kTags);
  p.view_fwd = nn::LinearParams::zeros(c.token_hidden, kTags);
  p.view_bwd = nn::LinearParams::zeros(c.token_hidden, kTags);
  p.view_fut = nn::LinearParams::zeros(c.token_hidden, kTags);
  p.view_pst = nn::LinearParams::zeros(c.token_hidden, kTags);
  p.fut_boundary = Eigen::VectorXd::Zero(c.token_hidden);
  p.pst_boundary = Eigen::VectorXd::Zero(c.token_hidden);
  return p;
}

TaggerParams TaggerParams::initialize(const TaggerConfig& c) {
  TaggerParams p = zeros(c);
  nn::Rng rng(c.seed);
  const double s = std::sqrt(3.0 / c.char_embed_dim);
  for (Eigen::Index j = 0; j < p.char_embeddings.cols(); ++j) {
    for (Eigen::Index i = 0; i < p.char_embeddings.rows(); ++i) {
      p.char_embeddings(i, j) = rng.uniform(-s, s);
    }
  }
  p.char_lstm.init(rng);
  p.attention.init(rng);
  p.modeling_lstm.init(rng);
  p.token_lstm.init(rng);
  p.emission.init(rng);
  p.view_fwd.init(rng);
  p.view_bwd.init(rng);
  p.view_fut.init(rng);
  p.view_pst.init(rng);
  return p;
}

std::vector<nn::TensorRef> TaggerParams::tensors() {
  using nn::tensor_ref;
  std::vector<nn::TensorRef> out;
  out.push_back(tensor_ref("char_embeddings", char_embeddings));
  auto add_lstm = [&](const std::string& name, nn::LstmParams& l) {
    out.push_back(tensor_ref(name + ".w_in", l.w_in));
    out.push_back(tensor_ref(name + ".w_rec", l.w_rec));
    out.push_back(tensor_ref(name + ".bias", l.bias));
  };
  add_lstm("char_lstm.fwd", char_lstm.fwd);
  add_lstm("char_lstm.bwd", char_lstm.bwd);
  out.push_back(tensor_ref("attention.wq", attention.wq));
  out.push_back(tensor_ref("attention.wk", attention.wk));
  out.push_back(tensor_ref("attention.wv", attention.wv));
  add_lstm("modeling_lstm.fwd", modeling_lstm.fwd);
  add_lstm("modeling_lstm.bwd", modeling_lstm.bwd);
  add_lstm("token_lstm.fwd", token_lstm.fwd);
  add_lstm("token_lstm.bwd", token_lstm.bwd);
  out.push_back(tensor_ref("emission.w", emission.w));
  out.push_back(tensor_ref("emission.b", emission.b));
  out.push_back(tensor_ref("crf.transitions", crf.transitions));
  out.push_back(tensor_ref("crf.start", crf.start));
  out.push_back(tensor_ref("crf.stop", crf.stop));
  auto add_linear = [&](const std::string& name, nn::LinearParams& l) {
    out.push_back(tensor_ref(name + ".w", l.w));
    out.push_back(tensor_ref(name + ".b", l.b));
  };
  add_linear("view_fwd", view_fwd);
  add_linear("view_bwd", view_bwd);
  add_linear("view_fut", view_fut);
  add_linear("view_pst", view_pst);
  out.push_back(tensor_ref("fut_boundary", fut_boundary));
  out.push_back(tensor_ref("pst_boundary", pst_boundary));
  return out;
}

std::size_t TaggerParams::parameter_count() {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += static_cast<std::size_t>(t.size());
  return n;
}

void axpy(TaggerParams& target, double scale, TaggerParams& other) {
  auto dst = target.tensors();
  auto src = other.tensors();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    Eigen::Map<Eigen::VectorXd>(dst[i].data, dst[i].size()) +=
        scale * Eigen::Map<Eigen::VectorXd>(src[i].data, src[i].size());
  }
}

double squared_norm(TaggerParams& params) {
  double s = 0.0;
  for (const auto& t : params.tensors()) {
    s += Eigen::Map<Eigen::VectorXd>(t.data, t.size()).squaredNorm();
  }
  return s;
}

Eigen::MatrixXd EncoderStates::full() const {
  Eigen::MatrixXd c(fwd.rows(), fwd.cols() + bwd.cols());
  c << fwd, bwd;
  return c;
}

EncoderStates encode(const Sentence& sentence, const TaggerParams& params, nn::Rng* rng) {
  return sentence_forward(sentence, params, rng).states;
}

Eigen::MatrixXd emissions(const Sentence& sentence, const TaggerParams& params) {
  return full_emissions(encode(sentence, params), params);
}

Eigen::MatrixXd view_distribution(const EncoderStates& states, const TaggerParams& params,
                                  View view) {
  if (view == View::Full) {
    return crf_marginals(full_emissions(states, params), effective_crf(params));
  }
  return nn::softmax_rows(linear_rows(view_input(states, params, view), view_layer(params, view)));
}

double supervised_loss(const Sentence& sentence, const PartialLabeling& constraints,
                       const TaggerParams& params, TaggerParams* grad, nn::Rng* rng) {
  SentenceForward sf = sentence_forward(sentence, params, rng);
  const Eigen::MatrixXd e = full_emissions(sf.states, params);
  CrfLossGradient cg = crf_constrained_nll(e, effective_crf(params), constraints);
  if (!grad || constraints.empty()) return cg.loss;

  const int h = params.config.token_hidden;
  Eigen::MatrixXd full = sf.states.full();
  grad->emission.w.noalias() += cg.d_emissions.transpose() * full;
  grad->emission.b += cg.d_emissions.colwise().sum().transpose();
  if (params.config.decoder == Decoder::Crf) {
    grad->crf.transitions += cg.d_transitions;
    grad->crf.start += cg.d_start;
    grad->crf.stop += cg.d_stop;
  }
  Eigen::MatrixXd d_full = cg.d_emissions * params.emission.w;
  sentence_backward(params, sf, d_full.leftCols(h), d_full.rightCols(h), *grad);
  return cg.loss;
}

double cvt_loss(const Sentence& sentence, const Eigen::MatrixXd& teacher,
                const TaggerParams& params, TaggerParams* grad, nn::Rng* rng) {
  SentenceForward sf = sentence_forward(sentence, params, rng);
  const Eigen::Index n = sf.states.fwd.rows();
  if (teacher.rows() != n || teacher.cols() != kTags) {
    throw InvalidArgument("teacher marginals do not match the sentence");
  }
  // Teacher entropy term, constant with respect to the parameters.
  double neg_entropy = 0.0;
  for (Eigen::Index i = 0; i < teacher.size(); ++i) {
    const double q = teacher.data()[i];
    if (q > 0.0) neg_entropy += q * std::log(q);
  }

  const int h = params.config.token_hidden;
  Eigen::MatrixXd d_fwd = Eigen::MatrixXd::Zero(n, h);
  Eigen::MatrixXd d_bwd = Eigen::MatrixXd::Zero(n, h);
  double loss = 0.0;
  for (View view : kAuxViews) {
    const Eigen::MatrixXd in = view_input(sf.states, params, view);
    const nn::LinearParams& layer = view_layer(params, view);
    const Eigen::MatrixXd logits = linear_rows(in, layer);
    Eigen::MatrixXd log_p(n, kTags);
    for (Eigen::Index t = 0; t < n; ++t) {
      const double m = logits.row(t).maxCoeff();
      const double lse = m + std::log((logits.row(t).array() - m).exp().sum());
      log_p.row(t) = logits.row(t).array() - lse;
    }
    loss += neg_entropy - (teacher.array() * log_p.array()).sum();
    if (!grad) continue;

    const Eigen::MatrixXd d_logits = log_p.array().exp().matrix() - teacher;
    nn::LinearParams& g_layer = view_layer(*grad, view);
    g_layer.w.noalias() += d_logits.transpose() * in;
    g_layer.b += d_logits.colwise().sum().transpose();
    const Eigen::MatrixXd d_in = d_logits * layer.w;
    switch (view) {
      case View::Fwd:
        d_fwd += d_in;
        break;
      case View::Bwd:
        d_bwd += d_in;
        break;
      case View::Fut:
        grad->fut_boundary += d_in.row(0).transpose();
        if (n > 1) d_fwd.topRows(n - 1) += d_in.bottomRows(n - 1);
        break;
      case View::Pst:
        grad->pst_boundary += d_in.row(n - 1).transpose();
        if (n > 1) d_bwd.bottomRows(n - 1) += d_in.topRows(n - 1);
        break;
      case View::Full:
        break;
    }
  }
  if (grad) sentence_backward(params, sf, std::move(d_fwd), std::move(d_bwd), *grad);
  return std::max(0.0, loss);
}

double cvt_loss(const Sentence& sentence, const TaggerParams& params) {
  const EncoderStates st = encode(sentence, params);
  const Eigen::MatrixXd teacher = view_distribution(st, params, View::Full);
  return cvt_loss(sentence, teacher, params, nullptr, nullptr);
}

MarginalTable CorpusPrediction::marginals() const {
  MarginalTable out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(s.marginals);
  return out;
}

std::vector<std::vector<TagId>> CorpusPrediction::viterbi() const {
  std::vector<std::vector<TagId>> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(s.viterbi);
  return out;
}

CorpusPrediction predict(const Corpus& corpus, const TaggerParams& params) {
  CorpusPrediction out;
  out.sentences.reserve(corpus.sentences.size());
  std::unordered_map<std::string, Eigen::RowVectorXd> word_cache;
  const CrfParams crf = effective_crf(params);
  for (const auto& sentence : corpus.sentences) {
    if (sentence.tokens.empty()) throw InvalidArgument("cannot encode an empty sentence");
    const auto n = static_cast<Eigen::Index>(sentence.tokens.size());
    Eigen::MatrixXd words(n, params.config.word_dim());
    for (Eigen::Index t = 0; t < n; ++t) {
      const auto& surface = sentence.tokens[static_cast<std::size_t>(t)].surface;
      auto it = word_cache.find(surface);
      if (it == word_cache.end()) {
        it = word_cache.emplace(surface, word_forward(surface, params, nullptr, nullptr)).first;
      }
      words.row(t) = it->second;
    }
    const EncoderStates st = token_forward(words, params, nullptr, nullptr);
    const Eigen::MatrixXd e = full_emissions(st, params);
    SentencePrediction sp;
    sp.marginals = crf_marginals(e, crf);
    sp.states = st.full();
    sp.viterbi = cral::viterbi(e, crf);
    sp.argmax = row_argmax(sp.marginals);
    sp.fwd_argmax = row_argmax(linear_rows(st.fwd, params.view_fwd));
    sp.bwd_argmax = row_argmax(linear_rows(st.bwd, params.view_bwd));
    out.sentences.push_back(std::move(sp));
  }
  return out;
}

MarginalTable predict_marginals(const Corpus& corpus, const TaggerParams& params) {
  return predict(corpus, params).marginals();
}

}  // namespace cral
