#include "ppg2abp/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

#include "json.hpp"

#include "ppg2abp/errors.hpp"

namespace ppg2abp::ckpt {

namespace {

constexpr char kMagic[8] = {'P', '2', 'A', 'B', 'P', 'A', 'R', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
    throw ParseError("truncated parameter file: " + path);
  return v;
}

using NamedConst = std::vector<std::pair<std::string, const ad::Tensor*>>;
using NamedMut = std::vector<std::pair<std::string, ad::Tensor*>>;

NamedConst collect_const(nets::GeneratorParams& p) {
  NamedConst out;
  p.for_each_param("", [&out](const std::string& name, ad::Tensor& t) {
    out.emplace_back(name, &t);
  });
  return out;
}

NamedConst collect_const(nets::DiscriminatorParams& p) {
  NamedConst out;
  p.for_each_param("", [&out](const std::string& name, ad::Tensor& t) {
    out.emplace_back(name, &t);
  });
  return out;
}

NamedMut collect_mut(nets::GeneratorParams& p) {
  NamedMut out;
  p.for_each_param("", [&out](const std::string& name, ad::Tensor& t) {
    out.emplace_back(name, &t);
  });
  return out;
}

NamedMut collect_mut(nets::DiscriminatorParams& p) {
  NamedMut out;
  p.for_each_param("", [&out](const std::string& name, ad::Tensor& t) {
    out.emplace_back(name, &t);
  });
  return out;
}

}  // namespace

void save_params(const std::string& path, const NamedConst& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArgumentError("cannot open parameter file for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kFormatVersion);
  write_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(t->shape.size()));
    for (int dim : t->shape) write_u32(out, static_cast<std::uint32_t>(dim));
    std::vector<float> raw(t->data.begin(), t->data.end());
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size() * sizeof(float)));
  }
  if (!out.flush()) throw ArgumentError("failed writing parameter file: " + path);
}

void load_params_into(const std::string& path, const NamedMut& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open parameter file: " + path);
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ParseError("not a parameter file: " + path);
  const std::uint32_t version = read_u32(in, path);
  if (version != kFormatVersion)
    throw ParseError("unsupported parameter file version " + std::to_string(version) + ": " +
                     path);
  const std::uint32_t count = read_u32(in, path);

  std::map<std::string, ad::Tensor*> by_name;
  for (const auto& [name, t] : params) by_name[name] = t;
  std::size_t filled = 0;

  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint32_t name_len = read_u32(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw ParseError("truncated parameter file: " + path);
    const std::uint32_t ndim = read_u32(in, path);
    ad::Shape shape(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d)
      shape[d] = static_cast<int>(read_u32(in, path));
    const int n = ad::numel(shape);
    std::vector<float> raw(static_cast<std::size_t>(n));
    if (!in.read(reinterpret_cast<char*>(raw.data()),
                 static_cast<std::streamsize>(raw.size() * sizeof(float))))
      throw ParseError("truncated parameter file: " + path);
    const auto it = by_name.find(name);
    if (it == by_name.end())
      throw ValidationError("parameter '" + name + "' in " + path +
                            " does not exist in the configured model");
    if (it->second->shape != shape)
      throw ValidationError("parameter '" + name + "' in " + path +
                            " has a shape unlike the configured model");
    for (int i = 0; i < n; ++i) it->second->data[static_cast<std::size_t>(i)] = raw[i];
    ++filled;
  }
  if (filled != by_name.size())
    throw ValidationError("parameter file " + path + " is missing " +
                          std::to_string(by_name.size() - filled) + " tensors");
}

void save(const std::string& dir, gan::PatModel& model, const nets::GeneratorConfig& gen,
          const nets::DiscriminatorConfig& disc, const gan::TrainConfig& train, long step,
          const std::vector<gan::StepMetrics>& history) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_params((fs::path(dir) / "G.params").string(), collect_const(model.G));
  save_params((fs::path(dir) / "F.params").string(), collect_const(model.F));
  save_params((fs::path(dir) / "D_X.params").string(), collect_const(model.D_X));
  save_params((fs::path(dir) / "D_Y.params").string(), collect_const(model.D_Y));

  nlohmann::ordered_json j;
  j["format_version"] = kFormatVersion;
  j["step"] = step;
  j["lambda_cyc"] = model.lambda_cyc;
  j["generator"] = {{"base_width", gen.base_width}, {"res_blocks", gen.res_blocks}};
  j["discriminator"] = {{"base_width", disc.base_width}};
  j["train"] = {{"epochs", train.epochs},       {"batch_size", train.batch_size},
                {"lr", train.lr},               {"beta1", train.beta1},
                {"seed", train.seed},           {"buffer_size", train.buffer_size},
                {"gan_form", to_string(train.gan_form)}};
  nlohmann::ordered_json hist = nlohmann::ordered_json::array();
  for (const gan::StepMetrics& m : history)
    hist.push_back({m.step, m.loss_gan_G, m.loss_gan_F, m.loss_cyc, m.loss_D_X, m.loss_D_Y});
  j["loss_history"] = std::move(hist);

  std::ofstream out(fs::path(dir) / "manifest.json", std::ios::trunc);
  if (!out) throw ArgumentError("cannot open manifest for writing in " + dir);
  out << j.dump(2) << '\n';
  if (!out.flush()) throw ArgumentError("failed writing manifest in " + dir);
}

Checkpoint load(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw ArgumentError("cannot open checkpoint manifest: " + manifest_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed checkpoint manifest: " + std::string(e.what()));
  }

  Checkpoint c;
  try {
    if (j.at("format_version").get<std::uint32_t>() != kFormatVersion)
      throw ParseError("unsupported checkpoint manifest version");
    c.step = j.at("step").get<long>();
    c.gen.base_width = j.at("generator").at("base_width").get<int>();
    c.gen.res_blocks = j.at("generator").at("res_blocks").get<int>();
    c.disc.base_width = j.at("discriminator").at("base_width").get<int>();
    const auto& t = j.at("train");
    c.train.epochs = t.at("epochs").get<int>();
    c.train.batch_size = t.at("batch_size").get<int>();
    c.train.lr = t.at("lr").get<double>();
    c.train.beta1 = t.at("beta1").get<double>();
    c.train.seed = t.at("seed").get<std::uint64_t>();
    c.train.buffer_size = t.at("buffer_size").get<int>();
    c.train.gan_form = gan::gan_form_from_string(t.at("gan_form").get<std::string>());
    for (const auto& row : j.at("loss_history")) {
      gan::StepMetrics m;
      m.step = row.at(0).get<long>();
      m.loss_gan_G = row.at(1).get<double>();
      m.loss_gan_F = row.at(2).get<double>();
      m.loss_cyc = row.at(3).get<double>();
      m.loss_D_X = row.at(4).get<double>();
      m.loss_D_Y = row.at(5).get<double>();
      c.history.push_back(m);
    }
    c.model = gan::PatModel::create(c.gen, c.disc, j.at("lambda_cyc").get<double>(),
                                    c.train.buffer_size, c.train.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint manifest missing fields: " + std::string(e.what()));
  }

  load_params_into((fs::path(dir) / "G.params").string(), collect_mut(c.model.G));
  load_params_into((fs::path(dir) / "F.params").string(), collect_mut(c.model.F));
  load_params_into((fs::path(dir) / "D_X.params").string(), collect_mut(c.model.D_X));
  load_params_into((fs::path(dir) / "D_Y.params").string(), collect_mut(c.model.D_Y));
  return c;
}

}  // namespace ppg2abp::ckpt
