#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cmpc/circuit.hpp"
#include "cmpc/decoder.hpp"
#include "cmpc/structure.hpp"
#include "cmpc/trainer.hpp"

namespace cmpc {

inline constexpr int kFileVersion = 1;
inline constexpr const char* kVersionString = "0.1.0";

// Compiled-PC JSON: {"version":1, "structure":{...}, "components":[
// {"weight":w, "params":[...]}], "metadata":{...}}. Floats round-trip
// exactly. Loading re-validates every invariant.
void save_pc(const CompiledPC& pc, const std::filesystem::path& path);
CompiledPC load_pc(const std::filesystem::path& path);

// Decoder model JSON: {"version":1, "arch":{...}, "layers":[...],
// "bn_frozen":bool, "structure_ref":{...}}.
struct DecoderModel {
  Decoder decoder;
  CircuitStructure structure;
};

void save_decoder_model(const DecoderModel& model, const std::filesystem::path& path);
DecoderModel load_decoder_model(const std::filesystem::path& path);

// Training report CSV (epoch, train_obj, valid_ll, wall_ms) + JSON summary.
void save_train_report_csv(const TrainReport& report, const std::filesystem::path& path);
void save_train_report_json(const TrainReport& report, const std::filesystem::path& path);

// LL table CSV with columns n_points, method, seed, mean_ll, stderr.
void save_eval_csv(const std::vector<EvalRow>& rows, const std::filesystem::path& path);

// Completed rows / samples as 0/1 CSV plus chosen-component column variant.
void save_completions_csv(const std::vector<std::vector<std::uint8_t>>& rows,
                          const std::vector<Eigen::Index>& components,
                          const std::filesystem::path& path);

std::string structure_to_json_string(const CircuitStructure& s);
CircuitStructure structure_from_json_string(const std::string& text);
void save_structure(const CircuitStructure& s, const std::filesystem::path& path);
CircuitStructure load_structure(const std::filesystem::path& path);

// Run manifest: the subcommand plus every option, written next to each
// output so any run can be reproduced from the manifest alone.
void write_manifest(const std::filesystem::path& path, const std::string& subcommand,
                    const std::vector<std::pair<std::string, std::string>>& options);

}  // namespace cmpc
