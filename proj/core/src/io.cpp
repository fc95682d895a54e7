#include "cmpc/io.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace cmpc {

using nlohmann::json;

namespace {

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": malformed JSON (" + e.what() + ")");
  }
  return j;
}

void dump_json(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failure on " + path.string());
}

void check_version(const json& j, const std::filesystem::path& path) {
  if (!j.contains("version") || !j["version"].is_number_integer() ||
      j["version"].get<int>() != kFileVersion) {
    throw std::runtime_error(path.string() + ": unsupported or missing file version");
  }
}

json structure_to_json(const CircuitStructure& s) {
  json j;
  j["kind"] = to_string(s.kind);
  j["num_vars"] = s.num_vars;
  if (s.kind == StructureKind::Clt) {
    json parent = json::array();
    for (int p : s.parent) {
      if (p == -1) {
        parent.push_back(nullptr);
      } else {
        parent.push_back(p);
      }
    }
    j["parent"] = std::move(parent);
  }
  return j;
}

CircuitStructure structure_from_json(const json& j) {
  CircuitStructure s;
  s.kind = structure_kind_from_string(j.at("kind").get<std::string>());
  s.num_vars = j.at("num_vars").get<int>();
  if (s.kind == StructureKind::Clt) {
    for (const auto& p : j.at("parent")) {
      s.parent.push_back(p.is_null() ? -1 : p.get<int>());
    }
  }
  validate_structure(s);
  return s;
}

std::vector<double> to_vector(const Eigen::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

Eigen::VectorXd from_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return {};
  const Eigen::Index cols = static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j.at(static_cast<std::size_t>(r));
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw std::runtime_error("ragged matrix in JSON");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c));
  }
  return m;
}

}  // namespace

void save_pc(const CompiledPC& pc, const std::filesystem::path& path) {
  validate_pc(pc);
  json j;
  j["version"] = kFileVersion;
  j["structure"] = structure_to_json(pc.structure);
  json components = json::array();
  for (Eigen::Index i = 0; i < pc.num_components(); ++i) {
    json comp;
    comp["weight"] = pc.weights[i];
    comp["params"] = to_vector(pc.params.col(i));
    components.push_back(std::move(comp));
  }
  j["components"] = std::move(components);
  json meta;
  meta["method"] = pc.metadata.method;
  meta["n_points"] = pc.metadata.n_points;
  meta["latent_dim"] = pc.metadata.latent_dim;
  meta["decoder_digest"] = pc.metadata.decoder_digest;
  for (const auto& [key, value] : pc.metadata.extra) meta[key] = value;
  j["metadata"] = std::move(meta);
  dump_json(j, path);
}

CompiledPC load_pc(const std::filesystem::path& path) {
  const json j = load_json(path);
  check_version(j, path);
  CompiledPC pc;
  pc.structure = structure_from_json(j.at("structure"));
  const auto& components = j.at("components");
  if (components.empty()) throw std::runtime_error(path.string() + ": no components");
  pc.weights.resize(static_cast<Eigen::Index>(components.size()));
  pc.params.resize(param_dim(pc.structure), static_cast<Eigen::Index>(components.size()));
  for (Eigen::Index i = 0; i < pc.weights.size(); ++i) {
    const auto& comp = components.at(static_cast<std::size_t>(i));
    pc.weights[i] = comp.at("weight").get<double>();
    const auto params = comp.at("params").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(params.size()) != pc.params.rows()) {
      throw std::runtime_error(path.string() + ": component parameter count mismatch");
    }
    pc.params.col(i) = from_vector(params);
  }
  if (j.contains("metadata")) {
    const auto& meta = j.at("metadata");
    for (const auto& [key, value] : meta.items()) {
      if (key == "method") {
        pc.metadata.method = value.get<std::string>();
      } else if (key == "n_points") {
        pc.metadata.n_points = value.get<std::int64_t>();
      } else if (key == "latent_dim") {
        pc.metadata.latent_dim = value.get<int>();
      } else if (key == "decoder_digest") {
        pc.metadata.decoder_digest = value.get<std::string>();
      } else {
        pc.metadata.extra[key] = value.is_string() ? value.get<std::string>() : value.dump();
      }
    }
  }
  try {
    validate_pc(pc);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  return pc;
}

void save_decoder_model(const DecoderModel& model, const std::filesystem::path& path) {
  const Decoder& dec = model.decoder;
  json j;
  j["version"] = kFileVersion;
  json arch;
  arch["input_dim"] = dec.input_dim;
  arch["output_dim"] = dec.output_dim;
  const auto widths = dec.layer_widths();
  arch["hidden"] = std::vector<int>(widths.begin() + 1, widths.end() - 1);
  arch["leaky_slope"] = dec.leaky_slope;
  arch["batch_norm"] = dec.has_batch_norm();
  arch["bn_momentum"] = dec.bn_momentum;
  j["arch"] = std::move(arch);
  json layers = json::array();
  for (const DecoderLayer& layer : dec.layers) {
    json lj;
    lj["weight"] = matrix_to_json(layer.weight);
    lj["bias"] = to_vector(layer.bias);
    if (layer.batch_norm) {
      const BatchNormState& bn = *layer.batch_norm;
      lj["bn"] = {{"gamma", to_vector(bn.gamma)},
                  {"beta", to_vector(bn.beta)},
                  {"running_mean", to_vector(bn.running_mean)},
                  {"running_var", to_vector(bn.running_var)}};
    }
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);
  j["bn_frozen"] = dec.bn_frozen;
  j["bn_has_stats"] = dec.bn_has_stats;
  j["structure_ref"] = structure_to_json(model.structure);
  dump_json(j, path);
}

DecoderModel load_decoder_model(const std::filesystem::path& path) {
  const json j = load_json(path);
  check_version(j, path);
  DecoderModel model;
  const auto& arch = j.at("arch");
  Decoder& dec = model.decoder;
  dec.input_dim = arch.at("input_dim").get<int>();
  dec.output_dim = arch.at("output_dim").get<int>();
  dec.leaky_slope = arch.at("leaky_slope").get<double>();
  dec.bn_momentum = arch.at("bn_momentum").get<double>();
  dec.bn_frozen = j.at("bn_frozen").get<bool>();
  dec.bn_has_stats = j.value("bn_has_stats", dec.bn_frozen);
  for (const auto& lj : j.at("layers")) {
    DecoderLayer layer;
    layer.weight = matrix_from_json(lj.at("weight"));
    layer.bias = from_vector(lj.at("bias").get<std::vector<double>>());
    if (layer.weight.rows() != layer.bias.size()) {
      throw std::runtime_error(path.string() + ": layer weight/bias shape mismatch");
    }
    if (lj.contains("bn")) {
      BatchNormState bn;
      bn.gamma = from_vector(lj["bn"].at("gamma").get<std::vector<double>>());
      bn.beta = from_vector(lj["bn"].at("beta").get<std::vector<double>>());
      bn.running_mean = from_vector(lj["bn"].at("running_mean").get<std::vector<double>>());
      bn.running_var = from_vector(lj["bn"].at("running_var").get<std::vector<double>>());
      if ((bn.running_var.array() <= 0.0).any()) {
        throw std::runtime_error(path.string() + ": batch-norm running variance must be > 0");
      }
      layer.batch_norm = std::move(bn);
    }
    dec.layers.push_back(std::move(layer));
  }
  if (dec.layers.empty()) throw std::runtime_error(path.string() + ": no layers");
  // Chained dimensions.
  Eigen::Index prev = dec.input_dim;
  for (const DecoderLayer& layer : dec.layers) {
    if (layer.weight.cols() != prev) {
      throw std::runtime_error(path.string() + ": layer dimensions do not chain");
    }
    prev = layer.weight.rows();
  }
  if (prev != dec.output_dim) {
    throw std::runtime_error(path.string() + ": output dimension mismatch");
  }
  model.structure = structure_from_json(j.at("structure_ref"));
  return model;
}

void save_train_report_csv(const TrainReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path.string());
  out << "epoch,train_obj,valid_ll,wall_ms\n";
  out.precision(17);
  for (std::size_t e = 0; e < report.epochs.size(); ++e) {
    const EpochStats& s = report.epochs[e];
    out << e << ',' << s.train_objective << ',' << s.valid_ll << ',' << s.wall_ms << '\n';
  }
}

void save_train_report_json(const TrainReport& report, const std::filesystem::path& path) {
  json j;
  j["version"] = kFileVersion;
  j["best_epoch"] = report.best_epoch;
  j["best_valid_ll"] = report.best_valid_ll;
  j["num_epochs"] = report.epochs.size();
  j["total_wall_ms"] = report.total_wall_ms;
  dump_json(j, path);
}

void save_eval_csv(const std::vector<EvalRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path.string());
  out << "n_points,method,seed,mean_ll,stderr\n";
  out.precision(17);
  for (const EvalRow& row : rows) {
    out << row.n_points << ',' << row.method << ',' << row.seed << ',' << row.mean_ll << ','
        << row.standard_error << '\n';
  }
}

void save_completions_csv(const std::vector<std::vector<std::uint8_t>>& rows,
                          const std::vector<Eigen::Index>& components,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path.string());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t v = 0; v < rows[r].size(); ++v) {
      if (v) out.put(',');
      out.put(rows[r][v] ? '1' : '0');
    }
    if (!components.empty()) out << ',' << components[r];
    out.put('\n');
  }
}

std::string structure_to_json_string(const CircuitStructure& s) {
  json j;
  j["version"] = kFileVersion;
  j["structure"] = structure_to_json(s);
  return j.dump(2);
}

CircuitStructure structure_from_json_string(const std::string& text) {
  const json j = json::parse(text);
  return structure_from_json(j.at("structure"));
}

void save_structure(const CircuitStructure& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path.string());
  out << structure_to_json_string(s) << '\n';
}

CircuitStructure load_structure(const std::filesystem::path& path) {
  const json j = load_json(path);
  check_version(j, path);
  return structure_from_json(j.at("structure"));
}

void write_manifest(const std::filesystem::path& path, const std::string& subcommand,
                    const std::vector<std::pair<std::string, std::string>>& options) {
  json j;
  j["tool"] = "cmpc";
  j["tool_version"] = kVersionString;
  j["file_version"] = kFileVersion;
  j["subcommand"] = subcommand;
  json opts = json::object();
  for (const auto& [key, value] : options) opts[key] = value;
  j["options"] = std::move(opts);
  dump_json(j, path);
}

}  // namespace cmpc
