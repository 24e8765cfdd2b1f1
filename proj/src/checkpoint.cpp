#include "cral/checkpoint.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cral/error.h"

namespace cral {

namespace {

constexpr char kMagic[8] = {'C', 'R', 'A', 'L', 'C', 'K', 'P', 'T'};
constexpr const char* kCharHashing = "codepoint_mod_buckets";

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

const char* decoder_name(Decoder d) { return d == Decoder::Crf ? "crf" : "softmax"; }

Decoder parse_decoder(const std::string& s) {
  if (s == "crf") return Decoder::Crf;
  if (s == "softmax") return Decoder::Softmax;
  throw InvalidArgument("unknown decoder '" + s + "' (expected crf or softmax)");
}

}  // namespace

nlohmann::json config_to_json(const TaggerConfig& c) {
  return {
      {"char_embed_dim", c.char_embed_dim},
      {"char_hidden", c.char_hidden},
      {"modeling_hidden", c.modeling_hidden},
      {"token_hidden", c.token_hidden},
      {"dropout_char", c.dropout_char},
      {"dropout_outputs", c.dropout_outputs},
      {"sgd_lr", c.sgd_lr},
      {"seed", c.seed},
      {"use_cvt", c.use_cvt},
      {"decoder", decoder_name(c.decoder)},
      {"char_buckets", c.char_buckets},
  };
}

TaggerConfig config_from_json(const nlohmann::json& j, TaggerConfig c) {
  if (!j.is_object()) throw InvalidArgument("tagger config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "char_embed_dim") c.char_embed_dim = value.get<int>();
    else if (key == "char_hidden") c.char_hidden = value.get<int>();
    else if (key == "modeling_hidden") c.modeling_hidden = value.get<int>();
    else if (key == "token_hidden") c.token_hidden = value.get<int>();
    else if (key == "dropout_char") c.dropout_char = value.get<double>();
    else if (key == "dropout_outputs") c.dropout_outputs = value.get<double>();
    else if (key == "sgd_lr") c.sgd_lr = value.get<double>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "use_cvt") c.use_cvt = value.get<bool>();
    else if (key == "decoder") c.decoder = parse_decoder(value.get<std::string>());
    else if (key == "char_buckets") c.char_buckets = value.get<int>();
    else throw InvalidArgument("unknown tagger config field '" + key + "'");
  }
  c.validate();
  return c;
}

std::string serialize_checkpoint(const TaggerParams& params) {
  auto& p = const_cast<TaggerParams&>(params);  // tensors() hands out mutable views
  nlohmann::json header;
  header["schema_version"] = kCheckpointSchemaVersion;
  header["config"] = config_to_json(p.config);
  header["char_hashing"] = kCharHashing;
  header["tags"] = TagSet::kSize;
  auto tensors = p.tensors();
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& t : tensors) shapes.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
  header["tensors"] = shapes;
  const std::string text = header.dump();

  std::string out(kMagic, sizeof kMagic);
  const std::uint64_t len = text.size();
  out.append(reinterpret_cast<const char*>(&len), sizeof len);
  out += text;
  for (const auto& t : tensors) {
    out.append(reinterpret_cast<const char*>(t.data),
               static_cast<std::size_t>(t.size()) * sizeof(double));
  }
  return out;
}

TaggerParams deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw Error("not a checkpoint file");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, sizeof len);
  if (len > bytes.size() - 16) throw Error("truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("corrupt checkpoint header: ") + e.what());
  }
  if (header.value("schema_version", -1) != kCheckpointSchemaVersion) {
    throw Error("unsupported checkpoint schema version");
  }
  if (header.value("char_hashing", "") != kCharHashing) {
    throw Error("checkpoint uses an unknown character hashing scheme");
  }
  if (header.value("tags", -1) != TagSet::kSize) throw Error("checkpoint tag count mismatch");

  TaggerParams params = TaggerParams::zeros(config_from_json(header.at("config")));
  auto tensors = params.tensors();
  const auto& shapes = header.at("tensors");
  if (shapes.size() != tensors.size()) throw Error("checkpoint tensor count mismatch");
  std::size_t offset = 16 + len;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& t = tensors[i];
    const auto& s = shapes[i];
    if (s.at("name").get<std::string>() != t.name || s.at("rows").get<Eigen::Index>() != t.rows ||
        s.at("cols").get<Eigen::Index>() != t.cols) {
      throw Error("checkpoint tensor '" + s.at("name").get<std::string>() +
                  "' does not match the configured shape of '" + t.name + "'");
    }
    const std::size_t n = static_cast<std::size_t>(t.size()) * sizeof(double);
    if (offset + n > bytes.size()) throw Error("truncated checkpoint tensor data");
    std::memcpy(t.data, bytes.data() + offset, n);
    offset += n;
  }
  if (offset != bytes.size()) throw Error("trailing bytes after checkpoint tensors");
  return params;
}

void save_checkpoint(const TaggerParams& params, const std::string& path) {
  const std::string bytes = serialize_checkpoint(params);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

TaggerParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace cral
