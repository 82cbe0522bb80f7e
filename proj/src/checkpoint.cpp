#include "crvae/checkpoint.hpp"

#include <cstdint>
#include <fstream>

#include <nlohmann/json.hpp>

#include "crvae/csv.hpp"

namespace crvae {
namespace {

constexpr char kMagic[8] = {'C', 'R', 'V', 'A', 'E', 'c', 'k', 'p'};

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint64_t get_u64(std::istream& in, const std::string& path) {
  char b[8];
  in.read(b, 8);
  if (!in) throw StageError("checkpoint: truncated file " + path);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i]))
                                   << (8 * i);
  return v;
}

void put_tensor(std::ostream& out, const std::string& name, const Matd& m) {
  put_u64(out, name.size());
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u64(out, static_cast<std::uint64_t>(m.rows()));
  put_u64(out, static_cast<std::uint64_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
}

nlohmann::json config_json(const ModelConfig& c) {
  return {{"image_h", c.image_h},
          {"image_w", c.image_w},
          {"channels", c.channels},
          {"lstm_hidden", c.lstm_hidden},
          {"lstm_layers", c.lstm_layers},
          {"bidirectional", c.bidirectional},
          {"embed_dim", c.embed_dim},
          {"mid_dim", c.mid_dim},
          {"latent_dim", c.latent_dim},
          {"max_len", c.max_len},
          {"lambda_text", c.lambda_text},
          {"kl_weight", c.kl_weight},
          {"cell", c.cell},
          {"teacher_forcing", c.teacher_forcing},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"grad_clip", c.grad_clip},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed}};
}

ModelConfig config_from(const nlohmann::json& j) {
  ModelConfig c;
  c.image_h = j.value("image_h", c.image_h);
  c.image_w = j.value("image_w", c.image_w);
  c.channels = j.value("channels", c.channels);
  c.lstm_hidden = j.value("lstm_hidden", c.lstm_hidden);
  c.lstm_layers = j.value("lstm_layers", c.lstm_layers);
  c.bidirectional = j.value("bidirectional", c.bidirectional);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.mid_dim = j.value("mid_dim", c.mid_dim);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.max_len = j.value("max_len", c.max_len);
  c.lambda_text = j.value("lambda_text", c.lambda_text);
  c.kl_weight = j.value("kl_weight", c.kl_weight);
  c.cell = j.value("cell", c.cell);
  c.teacher_forcing = j.value("teacher_forcing", c.teacher_forcing);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  return c;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& cfg) { return config_json(cfg).dump(2); }

ModelConfig model_config_from_json(const std::string& json_text) {
  try {
    return config_from(nlohmann::json::parse(json_text));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model config json: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, CrvaeModel<double>& model,
                     const ModelConfig& config, int epoch,
                     const std::vector<LossBreakdown>& curve) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError("checkpoint: cannot write " + path);
  out.write(kMagic, 8);
  put_u64(out, 1);  // format version

  nlohmann::json meta;
  meta["config"] = config_json(config);
  meta["epoch"] = epoch;
  nlohmann::json jc = nlohmann::json::array();
  for (const auto& lb : curve)
    jc.push_back({{"image_loss", lb.image_loss},
                  {"text_loss", lb.text_loss},
                  {"kl", lb.kl},
                  {"total", lb.total}});
  meta["curve"] = jc;
  const std::string meta_s = meta.dump();
  put_u64(out, meta_s.size());
  out.write(meta_s.data(), static_cast<std::streamsize>(meta_s.size()));

  auto params = model.parameters();
  auto bufs = model.buffers();
  put_u64(out, params.size() + bufs.size());
  for (auto* p : params) put_tensor(out, p->name, p->value);
  for (auto& [name, m] : bufs) put_tensor(out, name, *m);
  if (!out) throw StageError("checkpoint: write failed for " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StageError("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != std::string(kMagic, 8))
    throw StageError("checkpoint: bad magic in " + path);
  CheckpointData data;
  data.version = static_cast<int>(get_u64(in, path));
  if (data.version != 1)
    throw StageError("checkpoint: unsupported format version " + std::to_string(data.version));

  const std::uint64_t meta_len = get_u64(in, path);
  std::string meta_s(meta_len, '\0');
  in.read(meta_s.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw StageError("checkpoint: truncated metadata in " + path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_s);
  } catch (const nlohmann::json::exception& e) {
    throw StageError("checkpoint: corrupt metadata in " + path + ": " + e.what());
  }
  data.config = config_from(meta.at("config"));
  data.epoch = meta.value("epoch", 0);
  for (const auto& r : meta.value("curve", nlohmann::json::array())) {
    LossBreakdown lb;
    lb.image_loss = r.value("image_loss", 0.0);
    lb.text_loss = r.value("text_loss", 0.0);
    lb.kl = r.value("kl", 0.0);
    lb.total = r.value("total", 0.0);
    data.curve.push_back(lb);
  }

  const std::uint64_t count = get_u64(in, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t name_len = get_u64(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    const std::uint64_t rows = get_u64(in, path);
    const std::uint64_t cols = get_u64(in, path);
    Matd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * rows * cols));
    if (!in) throw StageError("checkpoint: truncated tensor " + name + " in " + path);
    data.tensors.emplace(std::move(name), std::move(m));
  }
  return data;
}

void restore_model(CrvaeModel<double>& model, const CheckpointData& data) {
  auto install = [&](const std::string& name, Matd& dst) {
    auto it = data.tensors.find(name);
    if (it == data.tensors.end())
      throw StageError("checkpoint: tensor missing: " + name);
    if (it->second.rows() != dst.rows() || it->second.cols() != dst.cols())
      throw StageError("checkpoint: shape mismatch for " + name +
                       " (checkpoint config does not match model)");
    dst = it->second;
  };
  for (auto* p : model.parameters()) install(p->name, p->value);
  for (auto& [name, m] : model.buffers()) install(name, *m);
}

void write_loss_curve_csv(const std::string& path, const std::vector<LossBreakdown>& curve,
                          const std::vector<std::string>& comments) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError("loss curve: cannot write " + path);
  for (const auto& c : comments) out << "# " << c << "\n";
  out << "epoch,image_loss,text_loss,total\n";
  for (size_t i = 0; i < curve.size(); ++i)
    out << (i + 1) << "," << csv::format_g17(curve[i].image_loss) << ","
        << csv::format_g17(curve[i].text_loss) << "," << csv::format_g17(curve[i].total) << "\n";
}

}  // namespace crvae
