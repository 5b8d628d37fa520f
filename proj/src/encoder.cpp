#include "jobembed/encoder.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "jobembed/io.hpp"

namespace jobembed {

FeatureVector featurize(std::string_view text, const FeaturizerConfig& cfg) {
  std::vector<char32_t> cps = decode_utf8(text);
  if (cps.empty()) throw std::invalid_argument("featurize: empty text");
  for (auto& cp : cps) {
    if (cp >= U'A' && cp <= U'Z') cp += 0x20;  // lowercase is script-2 only
  }
  const std::uint64_t mask = cfg.hash_dim() - 1;
  std::vector<std::uint32_t> raw;
  std::string bytes;
  for (int n : cfg.ngram_orders) {
    if (n <= 0) throw std::invalid_argument("featurize: ngram order must be positive");
    std::vector<char32_t> padded;
    padded.reserve(cps.size() + 2);
    padded.push_back(U'^');
    padded.insert(padded.end(), cps.begin(), cps.end());
    padded.push_back(U'$');
    if (padded.size() < static_cast<std::size_t>(n)) continue;
    for (std::size_t start = 0; start + n <= padded.size(); ++start) {
      bytes.clear();
      for (int k = 0; k < n; ++k) encode_utf8(padded[start + k], bytes);
      raw.push_back(static_cast<std::uint32_t>(fnv1a64(bytes) & mask));
    }
  }
  std::sort(raw.begin(), raw.end());
  FeatureVector fv;
  for (std::size_t i = 0; i < raw.size();) {
    std::size_t j = i;
    while (j < raw.size() && raw[j] == raw[i]) ++j;
    fv.index.push_back(raw[i]);
    fv.count.push_back(static_cast<float>(j - i));
    i = j;
  }
  return fv;
}

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json layer_header(const DenseLayer<float>& layer) {
  ordered_json j;
  j["out"] = layer.out_dim();
  j["in"] = layer.in_dim();
  j["act"] = std::string(to_string(layer.act));
  return j;
}

void append_floats(std::string& out, const float* data, std::size_t n) {
  const std::size_t at = out.size();
  out.resize(at + n * sizeof(float));
  std::memcpy(out.data() + at, data, n * sizeof(float));
}

void append_layer(std::string& out, const DenseLayer<float>& layer) {
  append_floats(out, layer.weights.data.data(), layer.weights.size());
  append_floats(out, layer.bias.data(), layer.bias.size());
}

class BlobReader {
 public:
  BlobReader(const std::string& buf, std::size_t at, const std::filesystem::path& path)
      : buf_(buf), at_(at), path_(path) {}

  void read_floats(float* dst, std::size_t n) {
    const std::size_t bytes = n * sizeof(float);
    if (at_ + bytes > buf_.size()) {
      throw std::runtime_error("truncated checkpoint: " + path_.string());
    }
    std::memcpy(dst, buf_.data() + at_, bytes);
    at_ += bytes;
  }

  bool exhausted() const { return at_ == buf_.size(); }

 private:
  const std::string& buf_;
  std::size_t at_;
  std::filesystem::path path_;
};

DenseLayer<float> read_layer(const nlohmann::json& j, BlobReader& blob) {
  DenseLayer<float> layer;
  const auto out = j.at("out").get<std::size_t>();
  const auto in = j.at("in").get<std::size_t>();
  layer.weights = Matrix<float>(out, in);
  layer.bias.assign(out, 0.0f);
  layer.act = activation_from_string(j.at("act").get<std::string>());
  blob.read_floats(layer.weights.data.data(), layer.weights.size());
  blob.read_floats(layer.bias.data(), layer.bias.size());
  return layer;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle) {
  ordered_json header;
  header["format"] = "jobembed-checkpoint";
  header["format_version"] = kCheckpointVersion;
  header["byte_order"] = "le";
  header["hash_bits"] = bundle.encoder.feat.hash_bits;
  header["ngram_orders"] = bundle.encoder.feat.ngram_orders;
  header["scripts"] = {{"l1_begin", static_cast<std::uint32_t>(bundle.encoder.feat.scripts.l1_begin)},
                       {"l1_end", static_cast<std::uint32_t>(bundle.encoder.feat.scripts.l1_end)}};
  header["dim"] = bundle.encoder.dim;
  ordered_json hidden = ordered_json::array();
  for (const auto& l : bundle.encoder.hidden) hidden.push_back(layer_header(l));
  header["hidden"] = hidden;
  ordered_json match = ordered_json::array();
  for (const auto& l : bundle.match_head.layers) match.push_back(layer_header(l));
  header["match_head"] = match;
  ordered_json field = ordered_json::array();
  for (const auto& l : bundle.field_head.layers) field.push_back(layer_header(l));
  header["field_head"] = field;
  header["field_names"] = bundle.field_names;

  std::string out = header.dump();
  out += '\n';
  append_floats(out, bundle.encoder.projection.data.data(), bundle.encoder.projection.size());
  for (const auto& l : bundle.encoder.hidden) append_layer(out, l);
  for (const auto& l : bundle.match_head.layers) append_layer(out, l);
  for (const auto& l : bundle.field_head.layers) append_layer(out, l);
  atomic_write_file(path, out);
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  const std::size_t nl = buf.find('\n');
  if (nl == std::string::npos) throw std::runtime_error("not a checkpoint: " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.substr(0, nl));
  } catch (const nlohmann::json::exception&) {
    throw std::runtime_error("not a checkpoint: " + path.string());
  }
  if (header.value("format", "") != "jobembed-checkpoint") {
    throw std::runtime_error("not a checkpoint: " + path.string());
  }
  if (header.value("format_version", -1) != kCheckpointVersion) {
    throw std::runtime_error("version-mismatched checkpoint: " + path.string() + " (expected " +
                             std::to_string(kCheckpointVersion) + ")");
  }

  ModelBundle bundle;
  bundle.encoder.feat.hash_bits = header.at("hash_bits").get<std::uint32_t>();
  bundle.encoder.feat.ngram_orders = header.at("ngram_orders").get<std::vector<int>>();
  bundle.encoder.feat.scripts.l1_begin = header.at("scripts").at("l1_begin").get<std::uint32_t>();
  bundle.encoder.feat.scripts.l1_end = header.at("scripts").at("l1_end").get<std::uint32_t>();
  bundle.encoder.dim = header.at("dim").get<std::size_t>();
  bundle.field_names = header.at("field_names").get<std::vector<std::string>>();

  BlobReader blob(buf, nl + 1, path);
  bundle.encoder.projection = Matrix<float>(bundle.encoder.feat.hash_dim(), bundle.encoder.dim);
  blob.read_floats(bundle.encoder.projection.data.data(), bundle.encoder.projection.size());
  for (const auto& j : header.at("hidden")) bundle.encoder.hidden.push_back(read_layer(j, blob));
  for (const auto& j : header.at("match_head")) {
    bundle.match_head.layers.push_back(read_layer(j, blob));
  }
  for (const auto& j : header.at("field_head")) {
    bundle.field_head.layers.push_back(read_layer(j, blob));
  }
  if (!blob.exhausted()) {
    throw std::runtime_error("trailing bytes in checkpoint: " + path.string());
  }
  return bundle;
}

}  // namespace jobembed
