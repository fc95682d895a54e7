#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cmpc/compile.hpp"
#include "cmpc/io.hpp"
#include "cmpc/quadrature.hpp"
#include "support.hpp"

using namespace cmpc;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("cmpc_io_" + name);
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

}  // namespace

TEST_CASE("compiled pc round-trips bit-identically") {
  CounterRng rng = CounterRng::keyed(91, {});
  for (int rep = 0; rep < 6; ++rep) {
    const auto kind = rep % 2 == 0 ? StructureKind::Factorised : StructureKind::Clt;
    auto pc = test::random_pc(kind, 3 + static_cast<int>(rng.next_below(8)),
                              1 + static_cast<Eigen::Index>(rng.next_below(6)), rng);
    pc.metadata.method = "rqmc";
    pc.metadata.n_points = pc.num_components();
    pc.metadata.latent_dim = 4;
    pc.metadata.decoder_digest = "deadbeefdeadbeef";
    pc.metadata.extra["note"] = "round-trip";
    const fs::path path = temp_file("pc.json");
    save_pc(pc, path);
    const CompiledPC back = load_pc(path);
    CHECK(back.structure.kind == pc.structure.kind);
    CHECK(back.structure.parent == pc.structure.parent);
    CHECK(back.weights == pc.weights);
    CHECK(back.params == pc.params);
    CHECK(back.metadata.method == pc.metadata.method);
    CHECK(back.metadata.extra.at("note") == "round-trip");
  }
}

TEST_CASE("pc loader rejects malformed files") {
  const fs::path path = temp_file("bad_pc.json");

  write_file(path, "{ not json");
  CHECK_THROWS_WITH_AS(load_pc(path), doctest::Contains("malformed"), std::runtime_error);

  // Weights summing to 0.9.
  write_file(path, R"({"version":1,
    "structure":{"kind":"factorised","num_vars":2},
    "components":[{"weight":0.4,"params":[0.5,0.5]},{"weight":0.5,"params":[0.2,0.8]}],
    "metadata":{}})");
  CHECK_THROWS(load_pc(path));

  // Unknown structure kind.
  write_file(path, R"({"version":1,
    "structure":{"kind":"mystery","num_vars":2},
    "components":[{"weight":1.0,"params":[0.5,0.5]}],
    "metadata":{}})");
  CHECK_THROWS_WITH_AS(load_pc(path), doctest::Contains("unknown structure kind"),
                       std::exception);

  // Wrong version.
  write_file(path, R"({"version":2,
    "structure":{"kind":"factorised","num_vars":2},
    "components":[{"weight":1.0,"params":[0.5,0.5]}],
    "metadata":{}})");
  CHECK_THROWS_WITH_AS(load_pc(path), doctest::Contains("version"), std::runtime_error);

  // Parameter count mismatch.
  write_file(path, R"({"version":1,
    "structure":{"kind":"factorised","num_vars":3},
    "components":[{"weight":1.0,"params":[0.5,0.5]}],
    "metadata":{}})");
  CHECK_THROWS(load_pc(path));

  // Probability outside [0, 1].
  write_file(path, R"({"version":1,
    "structure":{"kind":"factorised","num_vars":2},
    "components":[{"weight":1.0,"params":[0.5,1.5]}],
    "metadata":{}})");
  CHECK_THROWS(load_pc(path));
}

TEST_CASE("decoder model round-trips through json") {
  CounterRng rng = CounterRng::keyed(92, {});
  for (const bool bn : {false, true}) {
    DecoderModel model;
    model.decoder = init_decoder(3, 10, {6, 7}, 123, bn);
    if (bn) {
      Eigen::MatrixXd z(32, 3);
      for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = 2.0 * rng.next_unit() - 1.0;
      freeze_batch_norm_stats(model.decoder, z);
    }
    model.structure = bn ? static_cast<CircuitStructure>(test::random_tree(5, rng))
                         : make_factorised_structure(10);
    const fs::path path = temp_file("decoder.json");
    save_decoder_model(model, path);
    const DecoderModel back = load_decoder_model(path);
    CHECK(flatten_params(back.decoder) == flatten_params(model.decoder));
    CHECK(back.decoder.bn_frozen == model.decoder.bn_frozen);
    CHECK(back.structure.kind == model.structure.kind);
    CHECK(back.structure.parent == model.structure.parent);
    CHECK(decoder_digest(back.decoder) == decoder_digest(model.decoder));
    if (bn) {
      const auto& a = *back.decoder.layers[0].batch_norm;
      const auto& b = *model.decoder.layers[0].batch_norm;
      CHECK(a.running_mean == b.running_mean);
      CHECK(a.running_var == b.running_var);
    }
  }
}

TEST_CASE("decoder loader rejects inconsistent shapes") {
  const fs::path path = temp_file("bad_decoder.json");
  write_file(path, R"({"version":1,
    "arch":{"input_dim":2,"output_dim":2,"hidden":[],"leaky_slope":0.01,
            "batch_norm":false,"bn_momentum":0.1},
    "layers":[{"weight":[[1.0,0.0]],"bias":[0.0]}],
    "bn_frozen":false,
    "structure_ref":{"kind":"factorised","num_vars":2}})");
  CHECK_THROWS_WITH_AS(load_decoder_model(path), doctest::Contains("output dimension"),
                       std::runtime_error);
}

TEST_CASE("structure files round-trip") {
  const auto tree = make_clt_structure({2, -1, 1, 1});
  const fs::path path = temp_file("structure.json");
  save_structure(tree, path);
  const auto back = load_structure(path);
  CHECK(back.kind == StructureKind::Clt);
  CHECK(back.parent == tree.parent);
}

TEST_CASE("report and eval csv output") {
  TrainReport report;
  report.epochs = {{-10.5, -11.0, 12.0}, {-9.5, -10.0, 11.0}};
  report.best_epoch = 1;
  report.best_valid_ll = -10.0;
  const fs::path csv = temp_file("report.csv");
  save_train_report_csv(report, csv);
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == "epoch,train_obj,valid_ll,wall_ms");
  int rows = 0;
  std::string line;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 2);

  std::vector<EvalRow> eval_rows{{1024, "rqmc", 42, -6.02, 0.0}};
  const fs::path eval_csv = temp_file("eval.csv");
  save_eval_csv(eval_rows, eval_csv);
  std::ifstream ein(eval_csv);
  std::getline(ein, header);
  CHECK(header == "n_points,method,seed,mean_ll,stderr");
  std::getline(ein, line);
  CHECK(line.substr(0, 13) == "1024,rqmc,42,");
}

TEST_CASE("manifest writing") {
  const fs::path path = temp_file("manifest.json");
  write_manifest(path, "train", {{"seed", "7"}, {"data", "train.csv"}});
  std::ifstream in(path);
  const std::string text{std::istreambuf_iterator<char>(in),
                         std::istreambuf_iterator<char>()};
  CHECK(text.find("\"subcommand\": \"train\"") != std::string::npos);
  CHECK(text.find("\"seed\": \"7\"") != std::string::npos);
}
