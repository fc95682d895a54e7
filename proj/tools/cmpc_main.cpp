#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "cmpc/clt.hpp"
#include "cmpc/compile.hpp"
#include "cmpc/io.hpp"
#include "cmpc/latopt.hpp"
#include "cmpc/trainer.hpp"

namespace fs = std::filesystem;
using namespace cmpc;

namespace {

using Options = std::vector<std::pair<std::string, std::string>>;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void emit_manifest(const std::string& manifest, const std::string& out,
                   const std::string& subcommand, Options options) {
  const fs::path path = manifest.empty() ? fs::path(out + ".manifest.json")
                                         : fs::path(manifest);
  write_manifest(path, subcommand, options);
}

struct TrainCli {
  std::string data, valid, structure = "factorised", clt_file, mask, valid_mask;
  std::string out, report, manifest;
  std::uint64_t seed = 0;
  int latent_dim = 4;
  std::int64_t n_points = 1 << 10;
  int batch_size = 128, epochs = 300, patience = 15;
  int top_k = 0;
  std::string method = "rqmc";
  double lr = 1e-3;
  bool no_batch_norm = false;
};

void add_train_options(CLI::App* cmd, TrainCli& opt, bool masked) {
  cmd->add_option("--data", opt.data, "training CSV")->required();
  cmd->add_option("--valid", opt.valid, "validation CSV")->required();
  cmd->add_option("--structure", opt.structure, "factorised|clt")
      ->check(CLI::IsMember({"factorised", "clt"}));
  cmd->add_option("--clt-file", opt.clt_file, "structure JSON from clt-learn");
  cmd->add_option("--seed", opt.seed, "training seed")->required();
  cmd->add_option("--d", opt.latent_dim, "latent dimension");
  cmd->add_option("--n-points", opt.n_points, "integration points during training");
  cmd->add_option("--batch-size", opt.batch_size, "minibatch size");
  cmd->add_option("--epochs", opt.epochs, "maximum epochs");
  cmd->add_option("--patience", opt.patience, "early-stopping patience");
  cmd->add_option("--top-k", opt.top_k, "top-K objective (0 = full)");
  cmd->add_option("--method", opt.method, "mc|rqmc")->check(CLI::IsMember({"mc", "rqmc"}));
  cmd->add_option("--lr", opt.lr, "Adam learning rate");
  cmd->add_flag("--no-batch-norm", opt.no_batch_norm, "disable batch normalisation");
  cmd->add_option("--out", opt.out, "output model JSON")->required();
  cmd->add_option("--report", opt.report, "per-epoch CSV report");
  cmd->add_option("--manifest", opt.manifest, "manifest path (default <out>.manifest.json)");
  if (masked) {
    cmd->add_option("--mask", opt.mask, "training observedness mask CSV")->required();
    cmd->add_option("--valid-mask", opt.valid_mask, "validation mask CSV");
  }
}

void run_train(const TrainCli& opt, bool masked, const std::string& subcommand) {
  if (opt.structure == "clt" && opt.clt_file.empty()) {
    throw CLI::ValidationError("--structure clt requires --clt-file with a learned structure");
  }
  const BinaryDataset train = load_dataset(opt.data, std::nullopt, "train");
  const BinaryDataset valid = load_dataset(opt.valid, train.num_vars, "valid");
  const CircuitStructure structure = opt.structure == "clt"
                                         ? load_structure(opt.clt_file)
                                         : make_factorised_structure(train.num_vars);

  MissingMask train_mask, valid_mask;
  const MissingMask* train_mask_ptr = nullptr;
  const MissingMask* valid_mask_ptr = nullptr;
  if (masked) {
    train_mask = load_mask(opt.mask, train);
    train_mask_ptr = &train_mask;
    if (!opt.valid_mask.empty()) {
      valid_mask = load_mask(opt.valid_mask, valid);
      valid_mask_ptr = &valid_mask;
    }
  }

  TrainConfig config;
  config.n_points = opt.n_points;
  config.latent_dim = opt.latent_dim;
  config.batch_size = opt.batch_size;
  config.max_epochs = opt.epochs;
  config.patience = opt.patience;
  if (opt.top_k > 0) config.top_k = opt.top_k;
  config.seed = opt.seed;
  config.method = method_from_string(opt.method);
  config.adam.lr = opt.lr;
  config.batch_norm = !opt.no_batch_norm;

  const TrainResult result =
      train_cm(config, train, valid, structure, train_mask_ptr, valid_mask_ptr);
  save_decoder_model({result.decoder, structure}, opt.out);
  if (!opt.report.empty()) save_train_report_csv(result.report, opt.report);
  save_train_report_json(result.report, opt.out + ".summary.json");

  Options manifest{{"data", opt.data},
                   {"valid", opt.valid},
                   {"structure", opt.structure},
                   {"clt_file", opt.clt_file},
                   {"seed", std::to_string(opt.seed)},
                   {"d", std::to_string(opt.latent_dim)},
                   {"n_points", std::to_string(opt.n_points)},
                   {"batch_size", std::to_string(opt.batch_size)},
                   {"epochs", std::to_string(opt.epochs)},
                   {"patience", std::to_string(opt.patience)},
                   {"top_k", std::to_string(opt.top_k)},
                   {"method", opt.method},
                   {"lr", fmt(opt.lr)},
                   {"batch_norm", opt.no_batch_norm ? "0" : "1"},
                   {"out", opt.out},
                   {"report", opt.report}};
  if (masked) {
    manifest.emplace_back("mask", opt.mask);
    manifest.emplace_back("valid_mask", opt.valid_mask);
  }
  emit_manifest(opt.manifest, opt.out, subcommand, manifest);
  std::cout << "best_epoch=" << result.report.best_epoch
            << " best_valid_ll=" << fmt(result.report.best_valid_ll) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continuous mixtures of tractable probabilistic circuits"};
  app.require_subcommand(1);
  std::function<void()> runner;

  // ---- clt-learn ----
  struct {
    std::string data, out, manifest;
    double alpha = kDefaultCltAlpha;
    int root = 0;
  } clt_opt;
  {
    auto* cmd = app.add_subcommand("clt-learn", "learn a Chow-Liu tree structure");
    cmd->add_option("--data", clt_opt.data, "training CSV")->required();
    cmd->add_option("--alpha", clt_opt.alpha, "count smoothing");
    cmd->add_option("--root", clt_opt.root, "root variable index");
    cmd->add_option("--out", clt_opt.out, "output structure JSON")->required();
    cmd->add_option("--manifest", clt_opt.manifest, "manifest path");
    cmd->callback([&] {
      runner = [&] {
        const BinaryDataset data = load_dataset(clt_opt.data);
        const CircuitStructure tree = learn_clt_structure(data, clt_opt.alpha, clt_opt.root);
        save_structure(tree, clt_opt.out);
        emit_manifest(clt_opt.manifest, clt_opt.out, "clt-learn",
                      {{"data", clt_opt.data},
                       {"alpha", fmt(clt_opt.alpha)},
                       {"root", std::to_string(clt_opt.root)},
                       {"out", clt_opt.out}});
      };
    });
  }

  // ---- train / mask-train ----
  TrainCli train_opt, mask_opt;
  {
    auto* cmd = app.add_subcommand("train", "train a continuous mixture decoder");
    add_train_options(cmd, train_opt, false);
    cmd->callback([&] { runner = [&] { run_train(train_opt, false, "train"); }; });
  }
  {
    auto* cmd = app.add_subcommand("mask-train",
                                   "train with missing data via marginal likelihood");
    add_train_options(cmd, mask_opt, true);
    cmd->callback([&] { runner = [&] { run_train(mask_opt, true, "mask-train"); }; });
  }

  // ---- compile ----
  struct {
    std::string model, out, manifest, method = "rqmc";
    std::string train_data, valid_data;
    std::int64_t n_points = 1 << 10;
    std::uint64_t seed = 0;
    bool latopt = false;
    int lo_epochs = 50, lo_patience = 15, lo_batch = 128;
    double lo_lr = 1e-3;
  } compile_opt;
  {
    auto* cmd = app.add_subcommand("compile", "compile a model into a circuit file");
    cmd->add_option("--model", compile_opt.model, "decoder model JSON")->required();
    cmd->add_option("--n-points", compile_opt.n_points,
                    "integration points (gh: nodes per dimension)");
    cmd->add_option("--method", compile_opt.method, "mc|rqmc|gh")
        ->check(CLI::IsMember({"mc", "rqmc", "gh"}));
    cmd->add_option("--seed", compile_opt.seed, "rule seed")->required();
    cmd->add_option("--out", compile_opt.out, "output PC JSON")->required();
    cmd->add_flag("--latopt", compile_opt.latopt, "refine the points by latent optimisation");
    cmd->add_option("--train-data", compile_opt.train_data, "latopt training CSV");
    cmd->add_option("--valid-data", compile_opt.valid_data, "latopt validation CSV");
    cmd->add_option("--lo-epochs", compile_opt.lo_epochs, "latopt epoch cap");
    cmd->add_option("--lo-patience", compile_opt.lo_patience, "latopt patience");
    cmd->add_option("--lo-batch", compile_opt.lo_batch, "latopt batch size");
    cmd->add_option("--lo-lr", compile_opt.lo_lr, "latopt learning rate");
    cmd->add_option("--manifest", compile_opt.manifest, "manifest path");
    cmd->callback([&] {
      runner = [&] {
        if (compile_opt.latopt &&
            (compile_opt.train_data.empty() || compile_opt.valid_data.empty())) {
          throw CLI::ValidationError("--latopt requires --train-data and --valid-data");
        }
        const DecoderModel model = load_decoder_model(compile_opt.model);
        const Method method = method_from_string(compile_opt.method);
        IntegrationRule rule =
            method == Method::GaussHermite
                ? gauss_hermite_rule(static_cast<int>(compile_opt.n_points),
                                     model.decoder.input_dim)
                : make_rule(method, compile_opt.n_points, model.decoder.input_dim,
                            compile_opt.seed);
        std::string tag = to_string(rule.method);
        if (compile_opt.latopt) {
          const BinaryDataset train =
              load_dataset(compile_opt.train_data, model.structure.num_vars, "train");
          const BinaryDataset valid =
              load_dataset(compile_opt.valid_data, model.structure.num_vars, "valid");
          LatOptConfig lo;
          lo.max_epochs = compile_opt.lo_epochs;
          lo.patience = compile_opt.lo_patience;
          lo.batch_size = compile_opt.lo_batch;
          lo.adam.lr = compile_opt.lo_lr;
          lo.seed = compile_opt.seed;
          rule = latent_optimise(model.decoder, model.structure, rule, train, valid, lo).rule;
          tag = "latopt";
        }
        CompiledPC pc = compile(model.decoder, model.structure, rule);
        pc.metadata.method = tag;
        save_pc(pc, compile_opt.out);
        emit_manifest(compile_opt.manifest, compile_opt.out, "compile",
                      {{"model", compile_opt.model},
                       {"n_points", std::to_string(compile_opt.n_points)},
                       {"method", compile_opt.method},
                       {"seed", std::to_string(compile_opt.seed)},
                       {"latopt", compile_opt.latopt ? "1" : "0"},
                       {"train_data", compile_opt.train_data},
                       {"valid_data", compile_opt.valid_data},
                       {"lo_epochs", std::to_string(compile_opt.lo_epochs)},
                       {"lo_patience", std::to_string(compile_opt.lo_patience)},
                       {"lo_batch", std::to_string(compile_opt.lo_batch)},
                       {"lo_lr", fmt(compile_opt.lo_lr)},
                       {"out", compile_opt.out}});
      };
    });
  }

  // ---- eval ----
  struct {
    std::string model, pc, data, out, manifest, method = "rqmc";
    std::vector<std::int64_t> n_points{1 << 10};
    std::uint64_t seed = 0;
    bool seed_given = false;
  } eval_opt;
  {
    auto* cmd = app.add_subcommand("eval", "mean test log-likelihood table");
    auto* model_opt = cmd->add_option("--model", eval_opt.model, "decoder model JSON");
    auto* pc_opt = cmd->add_option("--pc", eval_opt.pc, "compiled PC JSON");
    model_opt->excludes(pc_opt);
    cmd->add_option("--data", eval_opt.data, "evaluation CSV")->required();
    cmd->add_option("--n-points", eval_opt.n_points,
                    "points per evaluation (gh: nodes per dimension)");
    cmd->add_option("--method", eval_opt.method, "mc|rqmc|gh")
        ->check(CLI::IsMember({"mc", "rqmc", "gh"}));
    auto* seed_opt = cmd->add_option("--seed", eval_opt.seed, "rule seed (required with --model)");
    cmd->add_option("--out", eval_opt.out, "output CSV")->required();
    cmd->add_option("--manifest", eval_opt.manifest, "manifest path");
    cmd->callback([&] {
      eval_opt.seed_given = seed_opt->count() > 0;
      runner = [&] {
        if (eval_opt.model.empty() == eval_opt.pc.empty()) {
          throw CLI::ValidationError("exactly one of --model / --pc is required");
        }
        std::vector<EvalRow> rows;
        if (!eval_opt.pc.empty()) {
          const CompiledPC pc = load_pc(eval_opt.pc);
          const BinaryDataset data =
              load_dataset(eval_opt.data, pc.structure.num_vars, "test");
          rows.push_back(evaluate_pc(pc, data));
        } else {
          if (!eval_opt.seed_given) {
            throw CLI::ValidationError("--seed is required when evaluating a model");
          }
          const DecoderModel model = load_decoder_model(eval_opt.model);
          const BinaryDataset data =
              load_dataset(eval_opt.data, model.structure.num_vars, "test");
          rows = evaluate_model(model.decoder, model.structure, data, eval_opt.n_points,
                                method_from_string(eval_opt.method), eval_opt.seed);
        }
        save_eval_csv(rows, eval_opt.out);
        std::string n_list;
        for (std::int64_t n : eval_opt.n_points) {
          if (!n_list.empty()) n_list += ' ';
          n_list += std::to_string(n);
        }
        emit_manifest(eval_opt.manifest, eval_opt.out, "eval",
                      {{"model", eval_opt.model},
                       {"pc", eval_opt.pc},
                       {"data", eval_opt.data},
                       {"n_points", n_list},
                       {"method", eval_opt.method},
                       {"seed", eval_opt.seed_given ? std::to_string(eval_opt.seed) : ""},
                       {"out", eval_opt.out}});
        for (const EvalRow& row : rows) {
          std::cout << row.n_points << ' ' << row.method << ' ' << fmt(row.mean_ll) << '\n';
        }
      };
    });
  }

  // ---- baseline ----
  struct {
    std::string data, valid, mode = "equal", out, report, manifest;
    int n_components = 1 << 10;
    std::uint64_t seed = 0;
    int epochs = 300, batch_size = 128, patience = 15;
    double lr = 1e-3;
  } base_opt;
  {
    auto* cmd = app.add_subcommand("baseline", "train a plain discrete mixture");
    cmd->add_option("--data", base_opt.data, "training CSV")->required();
    cmd->add_option("--valid", base_opt.valid, "validation CSV");
    cmd->add_option("--mode", base_opt.mode, "equal|learnable|em")
        ->check(CLI::IsMember({"equal", "learnable", "em"}));
    cmd->add_option("--n-components", base_opt.n_components, "mixture size");
    cmd->add_option("--seed", base_opt.seed, "seed")->required();
    cmd->add_option("--epochs", base_opt.epochs, "epoch / iteration cap");
    cmd->add_option("--batch-size", base_opt.batch_size, "minibatch size (gradient modes)");
    cmd->add_option("--patience", base_opt.patience, "early-stopping patience");
    cmd->add_option("--lr", base_opt.lr, "Adam learning rate (gradient modes)");
    cmd->add_option("--out", base_opt.out, "output PC JSON")->required();
    cmd->add_option("--report", base_opt.report, "per-epoch CSV report");
    cmd->add_option("--manifest", base_opt.manifest, "manifest path");
    cmd->callback([&] {
      runner = [&] {
        const BinaryDataset train = load_dataset(base_opt.data, std::nullopt, "train");
        BinaryDataset valid;
        const BinaryDataset* valid_ptr = nullptr;
        if (!base_opt.valid.empty()) {
          valid = load_dataset(base_opt.valid, train.num_vars, "valid");
          valid_ptr = &valid;
        }
        TrainConfig config;
        config.seed = base_opt.seed;
        config.max_epochs = base_opt.epochs;
        config.batch_size = base_opt.batch_size;
        config.patience = base_opt.patience;
        config.adam.lr = base_opt.lr;
        const PlainMixtureResult result =
            train_plain_mixture(train, valid_ptr, base_opt.n_components,
                                mixture_mode_from_string(base_opt.mode), config);
        save_pc(result.pc, base_opt.out);
        if (!base_opt.report.empty()) save_train_report_csv(result.report, base_opt.report);
        emit_manifest(base_opt.manifest, base_opt.out, "baseline",
                      {{"data", base_opt.data},
                       {"valid", base_opt.valid},
                       {"mode", base_opt.mode},
                       {"n_components", std::to_string(base_opt.n_components)},
                       {"seed", std::to_string(base_opt.seed)},
                       {"epochs", std::to_string(base_opt.epochs)},
                       {"batch_size", std::to_string(base_opt.batch_size)},
                       {"patience", std::to_string(base_opt.patience)},
                       {"lr", fmt(base_opt.lr)},
                       {"out", base_opt.out}});
      };
    });
  }

  // ---- err-est ----
  struct {
    std::string model, data, out, manifest;
    std::int64_t n_points = 1 << 10;
    int shifts = 8;
    std::uint64_t seed = 0;
  } err_opt;
  {
    auto* cmd = app.add_subcommand("err-est",
                                   "integration-error estimate via repeated random shifts");
    cmd->add_option("--model", err_opt.model, "decoder model JSON")->required();
    cmd->add_option("--data", err_opt.data, "evaluation CSV")->required();
    cmd->add_option("--n-points", err_opt.n_points, "points per shift");
    cmd->add_option("--shifts", err_opt.shifts, "number of independent shifts (>= 2)");
    cmd->add_option("--seed", err_opt.seed, "base seed")->required();
    cmd->add_option("--out", err_opt.out, "output CSV")->required();
    cmd->add_option("--manifest", err_opt.manifest, "manifest path");
    cmd->callback([&] {
      runner = [&] {
        const DecoderModel model = load_decoder_model(err_opt.model);
        const BinaryDataset data = load_dataset(err_opt.data, model.structure.num_vars, "test");
        const ErrorEstimate est = estimate_integration_error(
            model.decoder, model.structure, data, err_opt.n_points, err_opt.shifts,
            err_opt.seed);
        save_eval_csv({{err_opt.n_points, "rqmc", err_opt.seed, est.mean_ll,
                        est.standard_error}},
                      err_opt.out);
        emit_manifest(err_opt.manifest, err_opt.out, "err-est",
                      {{"model", err_opt.model},
                       {"data", err_opt.data},
                       {"n_points", std::to_string(err_opt.n_points)},
                       {"shifts", std::to_string(err_opt.shifts)},
                       {"seed", std::to_string(err_opt.seed)},
                       {"out", err_opt.out}});
        std::cout << "mean_ll=" << fmt(est.mean_ll)
                  << " stderr=" << fmt(est.standard_error) << '\n';
      };
    });
  }

  // ---- sample ----
  struct {
    std::string pc, model, out, manifest, method = "rqmc";
    std::int64_t count = 16, n_points = 1 << 10;
    std::uint64_t seed = 0;
  } sample_opt;
  {
    auto* cmd = app.add_subcommand("sample", "draw ancestral samples");
    auto* pc_opt = cmd->add_option("--pc", sample_opt.pc, "compiled PC JSON");
    auto* model_opt = cmd->add_option("--model", sample_opt.model,
                                      "decoder model JSON (compiled on the fly)");
    pc_opt->excludes(model_opt);
    cmd->add_option("--count", sample_opt.count, "number of samples")->required();
    cmd->add_option("--seed", sample_opt.seed, "sampling seed")->required();
    cmd->add_option("--n-points", sample_opt.n_points, "rule size when compiling a model");
    cmd->add_option("--method", sample_opt.method, "mc|rqmc when compiling a model")
        ->check(CLI::IsMember({"mc", "rqmc"}));
    cmd->add_option("--out", sample_opt.out, "output CSV")->required();
    cmd->add_option("--manifest", sample_opt.manifest, "manifest path");
    cmd->callback([&] {
      runner = [&] {
        if (sample_opt.pc.empty() == sample_opt.model.empty()) {
          throw CLI::ValidationError("exactly one of --pc / --model is required");
        }
        CompiledPC pc;
        if (!sample_opt.pc.empty()) {
          pc = load_pc(sample_opt.pc);
        } else {
          const DecoderModel model = load_decoder_model(sample_opt.model);
          pc = compile(model.decoder, model.structure,
                       make_rule(method_from_string(sample_opt.method), sample_opt.n_points,
                                 model.decoder.input_dim, sample_opt.seed));
        }
        const BinaryDataset samples =
            sample(pc, static_cast<std::size_t>(sample_opt.count), sample_opt.seed);
        save_dataset_csv(samples, sample_opt.out);
        emit_manifest(sample_opt.manifest, sample_opt.out, "sample",
                      {{"pc", sample_opt.pc},
                       {"model", sample_opt.model},
                       {"count", std::to_string(sample_opt.count)},
                       {"seed", std::to_string(sample_opt.seed)},
                       {"n_points", std::to_string(sample_opt.n_points)},
                       {"method", sample_opt.method},
                       {"out", sample_opt.out}});
      };
    });
  }

  // ---- mpe ----
  struct {
    std::string pc, data, mask, out, components_out, manifest;
  } mpe_opt;
  {
    auto* cmd = app.add_subcommand("mpe", "most probable completion of masked rows");
    cmd->add_option("--pc", mpe_opt.pc, "compiled PC JSON")->required();
    cmd->add_option("--data", mpe_opt.data, "rows CSV")->required();
    cmd->add_option("--mask", mpe_opt.mask, "observedness mask CSV (1 = observed)")->required();
    cmd->add_option("--out", mpe_opt.out, "completed rows CSV")->required();
    cmd->add_option("--components-out", mpe_opt.components_out,
                    "optional CSV of chosen component indices");
    cmd->add_option("--manifest", mpe_opt.manifest, "manifest path");
    cmd->callback([&] {
      runner = [&] {
        const CompiledPC pc = load_pc(mpe_opt.pc);
        const BinaryDataset data = load_dataset(mpe_opt.data, pc.structure.num_vars);
        const MissingMask mask = load_mask(mpe_opt.mask, data);
        std::vector<std::vector<std::uint8_t>> completions;
        std::vector<Eigen::Index> components;
        for (std::size_t r = 0; r < data.num_rows(); ++r) {
          MpeResult result = mpe_complete(pc, data.row(r), mask.row(r));
          completions.push_back(std::move(result.completion));
          components.push_back(result.component);
        }
        save_completions_csv(completions, {}, mpe_opt.out);
        if (!mpe_opt.components_out.empty()) {
          std::ofstream comp_out(mpe_opt.components_out);
          for (Eigen::Index c : components) comp_out << c << '\n';
        }
        emit_manifest(mpe_opt.manifest, mpe_opt.out, "mpe",
                      {{"pc", mpe_opt.pc},
                       {"data", mpe_opt.data},
                       {"mask", mpe_opt.mask},
                       {"out", mpe_opt.out},
                       {"components_out", mpe_opt.components_out}});
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    runner();
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
