#include "tar/checkpoint.hpp"

#include <cmath>
#include <map>

#include "tar/errors.hpp"
#include "tar/io.hpp"

namespace tar {

namespace {

constexpr char kMagic[8] = {'T', 'A', 'R', 'C', 'K', 'P', 'T', '1'};
const std::string kTextName = "text.embeddings";

struct Record {
  Shape shape;
  std::vector<double> data;
};

// Model configuration as numbers; enums by ordinal.
std::vector<std::pair<std::string, double>> config_echo(const ModelConfig& c) {
  return {{"d_f", double(c.d_f)},
          {"d_c", double(c.d_c)},
          {"stem_width", double(c.stem_width)},
          {"mid_width", double(c.mid_width)},
          {"shared_weights", c.shared_weights ? 1.0 : 0.0},
          {"heads", double(c.heads)},
          {"n_tafe", double(c.n_tafe)},
          {"ffn_mult", double(c.ffn_mult)},
          {"text_stage", double(static_cast<int>(c.text_stage))},
          {"pe_stage", double(static_cast<int>(c.pe_stage))},
          {"d_text", double(c.d_text)},
          {"theta_c", c.theta_c},
          {"temperature", c.temperature},
          {"fine_window", double(c.fine_window)},
          {"fine_mode", double(static_cast<int>(c.fine_mode))}};
}

std::size_t as_size(double v, const std::string& key) {
  if (!(v >= 0.0) || v != std::floor(v) || v > 1e9) {
    throw FormatError("TARCKPT1: bad value for config." + key);
  }
  return static_cast<std::size_t>(v);
}

template <typename E>
E as_enum(double v, int count, const std::string& key) {
  const std::size_t k = as_size(v, key);
  if (k >= static_cast<std::size_t>(count)) throw FormatError("TARCKPT1: bad value for config." + key);
  return static_cast<E>(k);
}

ModelConfig config_from(const std::map<std::string, double>& v) {
  auto need = [&](const std::string& k) {
    const auto it = v.find(k);
    if (it == v.end()) throw FormatError("TARCKPT1: missing config." + k);
    return it->second;
  };
  ModelConfig c;
  c.d_f = as_size(need("d_f"), "d_f");
  c.d_c = as_size(need("d_c"), "d_c");
  c.stem_width = as_size(need("stem_width"), "stem_width");
  c.mid_width = as_size(need("mid_width"), "mid_width");
  c.shared_weights = as_size(need("shared_weights"), "shared_weights") != 0;
  c.heads = as_size(need("heads"), "heads");
  c.n_tafe = as_size(need("n_tafe"), "n_tafe");
  c.ffn_mult = as_size(need("ffn_mult"), "ffn_mult");
  c.text_stage = as_enum<TextStage>(need("text_stage"), 4, "text_stage");
  c.pe_stage = as_enum<PeStage>(need("pe_stage"), 2, "pe_stage");
  c.d_text = as_size(need("d_text"), "d_text");
  c.theta_c = need("theta_c");
  c.temperature = need("temperature");
  c.fine_window = as_size(need("fine_window"), "fine_window");
  c.fine_mode = as_enum<FineMode>(need("fine_mode"), 2, "fine_mode");
  RunConfig rc;
  rc.model = c;
  const auto problems = rc.problems();
  if (!problems.empty()) throw FormatError("TARCKPT1: invalid model config: " + problems.front());
  return c;
}

void write_record(ByteWriter& w, const std::string& name, const Shape& shape,
                  std::span<const double> data) {
  w.u16(static_cast<std::uint16_t>(name.size()));
  w.bytes(name);
  w.bytes(std::string(1, static_cast<char>(shape.size())));
  for (std::size_t d : shape) w.u32(static_cast<std::uint32_t>(d));
  for (double v : data) w.f32(static_cast<float>(v));
}

}  // namespace

std::string encode_checkpoint(const Model& model) {
  const ParamStore& p = model.params();
  const auto echo = config_echo(model.config());
  ByteWriter w;
  w.bytes(std::string_view(kMagic, sizeof kMagic));
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(p.size() + (model.has_text() ? 1 : 0) + echo.size()));
  for (const auto& name : p.names()) {
    const Tensor& t = p.get(name);
    write_record(w, name, t.shape(), t.data());
  }
  if (model.has_text()) write_record(w, kTextName, model.text().shape(), model.text().data());
  for (const auto& [key, value] : echo) {
    const double v = value;
    write_record(w, "config." + key, {1}, std::span<const double>(&v, 1));
  }
  return w.take();
}

Model decode_checkpoint(std::string_view bytes) {
  ByteReader r(bytes, "TARCKPT1");
  if (r.bytes(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic)) {
    throw FormatError("TARCKPT1: bad magic");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("TARCKPT1: unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  std::vector<std::pair<std::string, Record>> records;
  std::map<std::string, double> echo;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint16_t len = r.u16();
    std::string name(r.bytes(len));
    Record rec;
    const std::size_t ndim = static_cast<unsigned char>(r.bytes(1)[0]);
    for (std::size_t d = 0; d < ndim; ++d) rec.shape.push_back(r.u32());
    const std::size_t n = shape_numel(rec.shape);
    if (n > bytes.size()) throw FormatError("TARCKPT1: record '" + name + "' is truncated");
    rec.data.resize(n);
    for (double& v : rec.data) v = r.f32();
    if (name.starts_with("config.")) {
      if (n != 1) throw FormatError("TARCKPT1: config record '" + name + "' must hold one value");
      echo[name.substr(7)] = rec.data[0];
    } else {
      records.emplace_back(std::move(name), std::move(rec));
    }
  }
  if (!r.done()) throw FormatError("TARCKPT1: trailing bytes");

  Model model(config_from(echo), 0);
  std::map<std::string, bool> seen;
  for (auto& [name, rec] : records) {
    if (seen[name]) throw FormatError("TARCKPT1: duplicate tensor '" + name + "'");
    seen[name] = true;
    if (name == kTextName) {
      try {
        model.set_text_tensor(Tensor::from_data(rec.shape, rec.data));
      } catch (const Error& e) {
        throw FormatError(std::string("TARCKPT1: ") + e.what());
      }
      continue;
    }
    if (!model.params().contains(name)) {
      throw FormatError("TARCKPT1: unknown tensor '" + name + "' for this model configuration");
    }
    Tensor t = model.params().get(name);
    if (t.shape() != rec.shape) {
      throw FormatError("TARCKPT1: tensor '" + name + "' has shape " + shape_str(rec.shape) +
                        ", model expects " + shape_str(t.shape()));
    }
    std::copy(rec.data.begin(), rec.data.end(), t.mutable_data().begin());
  }
  for (const auto& name : model.params().names()) {
    if (!seen.count(name)) throw FormatError("TARCKPT1: missing tensor '" + name + "'");
  }
  return model;
}

void save_checkpoint(const Model& model, const std::string& path) {
  write_file(path, encode_checkpoint(model));
}

Model load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

}  // namespace tar
