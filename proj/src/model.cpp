#include "adaprl/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "adaprl/rng.hpp"

namespace adaprl {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

enum class ParamKind { Embedding, Weight, Bias };

struct LayoutEntry {
  ParamDesc desc;
  ParamKind kind;
  std::size_t fan_in = 0, fan_out = 0;
};

std::vector<LayoutEntry> full_layout(const MlpConfig& c) {
  std::vector<LayoutEntry> out;
  for (std::size_t i = 0; i < c.vocab_sizes.size(); ++i)
    out.push_back({{"emb" + std::to_string(i), {c.vocab_sizes[i], c.embedding_dim}}, ParamKind::Embedding, 0, 0});
  std::vector<std::size_t> widths = c.hidden;
  widths.push_back(c.outputs);
  const std::size_t fan0 = c.input_width();
  if (c.numeric >= 1)
    out.push_back({{"w0_num", {c.numeric, widths[0]}}, ParamKind::Weight, fan0, widths[0]});
  for (std::size_t i = 0; i < c.vocab_sizes.size(); ++i)
    out.push_back({{"w0_cat" + std::to_string(i), {c.embedding_dim, widths[0]}}, ParamKind::Weight, fan0, widths[0]});
  out.push_back({{"b0", {std::size_t{1}, widths[0]}}, ParamKind::Bias, 0, 0});
  for (std::size_t l = 1; l < widths.size(); ++l) {
    out.push_back(
        {{"w" + std::to_string(l), {widths[l - 1], widths[l]}}, ParamKind::Weight, widths[l - 1], widths[l]});
    out.push_back({{"b" + std::to_string(l), {std::size_t{1}, widths[l]}}, ParamKind::Bias, 0, 0});
  }
  return out;
}

Mlp init_mlp(const MlpConfig& config, std::uint64_t seed) {
  Mlp net;
  net.config = config;
  std::mt19937_64 rng(seed);
  for (const LayoutEntry& e : full_layout(config)) {
    Tensor t = Tensor::zeros(e.desc.shape);
    switch (e.kind) {
      case ParamKind::Embedding:
        for (double& v : t.values) v = 0.01 * normal(rng);
        break;
      case ParamKind::Weight: {
        const double limit = std::sqrt(6.0 / static_cast<double>(e.fan_in + e.fan_out));
        for (double& v : t.values) v = uniform(rng, -limit, limit);
        break;
      }
      case ParamKind::Bias:
        break;  // zeros
    }
    net.params.push_back(std::move(t));
  }
  return net;
}

struct BackboneOut {
  NodeId out;
  std::vector<NodeId> params;
};

BackboneOut backbone_forward(Graph& g, const Mlp& net, const Batch& batch,
                             const std::vector<std::string>& cat_names) {
  const MlpConfig& c = net.config;
  if (batch.numeric.rank() != 2 || batch.numeric.shape[1] != c.numeric)
    fail("forward: batch has " +
         (batch.numeric.rank() == 2 ? std::to_string(batch.numeric.shape[1]) : shape_str(batch.numeric.shape)) +
         " numeric features, model expects " + std::to_string(c.numeric));
  if (batch.categorical.size() != c.vocab_sizes.size())
    fail("forward: batch has " + std::to_string(batch.categorical.size()) + " categorical columns, model expects " +
         std::to_string(c.vocab_sizes.size()));
  const std::size_t b = batch.numeric.shape[0];
  for (std::size_t ci = 0; ci < batch.categorical.size(); ++ci) {
    if (batch.categorical[ci].size() != b)
      fail("forward: categorical column " + std::to_string(ci) + " has " +
           std::to_string(batch.categorical[ci].size()) + " rows, expected " + std::to_string(b));
    for (std::uint32_t code : batch.categorical[ci])
      if (code >= c.vocab_sizes[ci]) {
        std::string label = ci < cat_names.size() ? cat_names[ci] : "cat" + std::to_string(ci);
        fail("forward: code " + std::to_string(code) + " out of range for column '" + label +
             "' (vocabulary size " + std::to_string(c.vocab_sizes[ci]) + ")");
      }
  }

  BackboneOut r;
  r.params.reserve(net.params.size());
  for (const Tensor& p : net.params) r.params.push_back(g.leaf(p));

  NodeId ones = g.leaf(Tensor::full({b, 1}, 1.0));
  std::size_t at = c.vocab_sizes.size();  // first-layer blocks start after embeddings
  const std::size_t w0_num = c.numeric >= 1 ? at++ : 0;
  const std::size_t w0_cat0 = at;
  at += c.vocab_sizes.size();
  const std::size_t b0 = at++;

  NodeId acc = g.matmul(ones, r.params[b0]);
  if (c.numeric >= 1) acc = g.add(acc, g.matmul(g.leaf(batch.numeric), r.params[w0_num]));
  for (std::size_t ci = 0; ci < c.vocab_sizes.size(); ++ci) {
    Tensor onehot = Tensor::zeros({b, c.vocab_sizes[ci]});
    for (std::size_t row = 0; row < b; ++row) onehot.values[row * c.vocab_sizes[ci] + batch.categorical[ci][row]] = 1.0;
    NodeId embedded = g.matmul(g.leaf(std::move(onehot)), r.params[ci]);
    acc = g.add(acc, g.matmul(embedded, r.params[w0_cat0 + ci]));
  }
  for (std::size_t l = 1; l <= c.hidden.size(); ++l) {
    NodeId h = g.relu(acc);
    acc = g.add(g.matmul(h, r.params[at]), g.matmul(ones, r.params[at + 1]));
    at += 2;
  }
  r.out = acc;
  return r;
}

Tensor head_selector(std::size_t d_t, std::size_t which) {
  Tensor s = Tensor::zeros({2 * d_t, d_t});
  for (std::size_t j = 0; j < d_t; ++j) s.values[(which * d_t + j) * d_t + j] = 1.0;
  return s;
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

void MlpConfig::validate() const {
  if (outputs < 1) fail("MlpConfig: outputs must be at least 1");
  if (!vocab_sizes.empty() && embedding_dim < 1) fail("MlpConfig: embedding_dim must be at least 1");
  for (std::size_t v : vocab_sizes)
    if (v < 1) fail("MlpConfig: vocabulary sizes must be at least 1");
  for (std::size_t h : hidden)
    if (h < 1) fail("MlpConfig: hidden widths must be at least 1");
  if (input_width() < 1) fail("MlpConfig: model needs at least one input feature");
}

std::vector<ParamDesc> param_layout(const MlpConfig& config) {
  std::vector<ParamDesc> out;
  for (const LayoutEntry& e : full_layout(config)) out.push_back(e.desc);
  return out;
}

ModelPair ModelPair::init(const MlpConfig& config, std::uint64_t seed, std::vector<std::string> cat_names) {
  config.validate();
  if (!cat_names.empty() && cat_names.size() != config.vocab_sizes.size())
    fail("ModelPair: got " + std::to_string(cat_names.size()) + " categorical names for " +
         std::to_string(config.vocab_sizes.size()) + " columns");
  ModelPair pair;
  // Independent seed streams: the main network's initialization does not
  // depend on the auxiliary network existing at all.
  pair.main = init_mlp(config, mix_seed(seed, 1));
  MlpConfig aux_config = config;
  aux_config.outputs = 2 * config.outputs;
  pair.aux = init_mlp(aux_config, mix_seed(seed, 2));
  pair.cat_names = std::move(cat_names);
  return pair;
}

MainForward forward_main(Graph& g, const ModelPair& pair, const Batch& batch) {
  BackboneOut r = backbone_forward(g, pair.main, batch, pair.cat_names);
  return MainForward{r.out, std::move(r.params)};
}

AuxForward forward_aux(Graph& g, const ModelPair& pair, const Batch& batch) {
  BackboneOut r = backbone_forward(g, pair.aux, batch, pair.cat_names);
  const std::size_t d_t = pair.main.config.outputs;
  AuxForward out;
  out.mu = g.matmul(r.out, g.leaf(head_selector(d_t, 0)));
  out.sigma2 = g.exp(g.clamp(g.matmul(r.out, g.leaf(head_selector(d_t, 1))), -10.0, 10.0));
  out.params = std::move(r.params);
  return out;
}

void save_checkpoint(const std::string& path, const ModelPair& pair, const Schema& schema,
                     const std::vector<std::vector<std::string>>& vocabs) {
  nlohmann::json header;
  header["format"] = "adaprl-checkpoint";
  header["version"] = 1;
  header["config"] = {{"numeric", pair.main.config.numeric},
                      {"vocab_sizes", pair.main.config.vocab_sizes},
                      {"embedding_dim", pair.main.config.embedding_dim},
                      {"hidden", pair.main.config.hidden},
                      {"outputs", pair.main.config.outputs}};
  header["cat_names"] = pair.cat_names;
  nlohmann::json js = nlohmann::json::array();
  for (const ColumnSpec& c : schema) js.push_back({{"name", c.name}, {"kind", column_kind_name(c.kind)}});
  header["schema"] = std::move(js);
  header["vocabs"] = vocabs;

  nlohmann::json tensors = nlohmann::json::array();
  std::vector<double> payload;
  auto emit = [&](const char* net, const Mlp& mlp) {
    std::vector<ParamDesc> layout = param_layout(mlp.config);
    for (std::size_t i = 0; i < layout.size(); ++i) {
      tensors.push_back({{"net", net},
                         {"name", layout[i].name},
                         {"shape", layout[i].shape},
                         {"offset", payload.size()}});
      payload.insert(payload.end(), mlp.params[i].values.begin(), mlp.params[i].values.end());
    }
  };
  emit("main", pair.main);
  emit("aux", pair.aux);
  header["tensors"] = std::move(tensors);

  std::string head = header.dump();
  std::string bytes;
  bytes.reserve(8 + head.size() + payload.size() * 8);
  put_u64(bytes, head.size());
  bytes += head;
  for (double d : payload) put_u64(bytes, std::bit_cast<std::uint64_t>(d));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open file for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("save_checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8) throw std::runtime_error("load_checkpoint: file is truncated: " + path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t head_len = get_u64(p);
  if (8 + head_len > bytes.size()) throw std::runtime_error("load_checkpoint: file is truncated: " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(8, head_len));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("load_checkpoint: header is not valid JSON: ") + e.what());
  }
  if (header.value("format", "") != std::string("adaprl-checkpoint"))
    throw std::runtime_error("load_checkpoint: not a checkpoint file: " + path);

  Checkpoint ck;
  try {
    const nlohmann::json& jc = header.at("config");
    MlpConfig config;
    config.numeric = jc.at("numeric").get<std::size_t>();
    config.vocab_sizes = jc.at("vocab_sizes").get<std::vector<std::size_t>>();
    config.embedding_dim = jc.at("embedding_dim").get<std::size_t>();
    config.hidden = jc.at("hidden").get<std::vector<std::size_t>>();
    config.outputs = jc.at("outputs").get<std::size_t>();
    config.validate();

    ck.pair.main.config = config;
    ck.pair.aux.config = config;
    ck.pair.aux.config.outputs = 2 * config.outputs;
    ck.pair.cat_names = header.at("cat_names").get<std::vector<std::string>>();
    for (const nlohmann::json& jcol : header.at("schema"))
      ck.schema.push_back({jcol.at("name").get<std::string>(), column_kind_from_name(jcol.at("kind"))});
    ck.vocabs = header.at("vocabs").get<std::vector<std::vector<std::string>>>();

    const std::size_t payload_elems = (bytes.size() - 8 - head_len) / 8;
    auto read_tensor = [&](const nlohmann::json& jt) {
      Tensor t = Tensor::zeros(jt.at("shape").get<std::vector<std::size_t>>());
      const std::size_t offset = jt.at("offset").get<std::size_t>();
      if (offset + t.numel() > payload_elems)
        throw std::runtime_error("load_checkpoint: payload is shorter than the header promises: " + path);
      const unsigned char* base = p + 8 + head_len + offset * 8;
      for (std::size_t i = 0; i < t.numel(); ++i) t.values[i] = std::bit_cast<double>(get_u64(base + i * 8));
      return t;
    };
    auto fill = [&](const char* net, Mlp& mlp) {
      std::vector<ParamDesc> layout = param_layout(mlp.config);
      std::size_t found = 0;
      for (const nlohmann::json& jt : header.at("tensors")) {
        if (jt.at("net").get<std::string>() != net) continue;
        if (found >= layout.size() || jt.at("name").get<std::string>() != layout[found].name ||
            jt.at("shape").get<std::vector<std::size_t>>() != layout[found].shape)
          throw std::runtime_error("load_checkpoint: tensor list does not match the stored architecture: " + path);
        mlp.params.push_back(read_tensor(jt));
        ++found;
      }
      if (found != layout.size())
        throw std::runtime_error("load_checkpoint: tensor list does not match the stored architecture: " + path);
    };
    fill("main", ck.pair.main);
    fill("aux", ck.pair.aux);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("load_checkpoint: malformed header: ") + e.what());
  }
  return ck;
}

}  // namespace adaprl
