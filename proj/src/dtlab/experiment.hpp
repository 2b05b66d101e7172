#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dtlab/checkpoint.hpp"
#include "dtlab/config.hpp"

namespace dtlab {

struct CurveRow {
    std::string series;
    double x = 0.0;
    double y = 0.0;
};

struct Report {
    std::string experiment;
    std::string config_hash;
    nlohmann::json seeds = nlohmann::json::object();
    // table name -> row name -> accuracy as a fraction
    nlohmann::json accuracy = nlohmann::json::object();
    nlohmann::json metrics = nlohmann::json::object();
    std::vector<CurveRow> curves;
    std::vector<std::string> artifacts;
    // Wall-clock seconds per phase; written to a sidecar so reports stay byte-stable.
    std::vector<std::pair<std::string, double>> timing;

    nlohmann::json to_json() const;
    std::string csv() const;
    std::string timing_json() const;
};

struct EmittedFiles {
    std::filesystem::path report;
    std::filesystem::path curves;
    std::filesystem::path timing;
};

// report.json, curves.csv ("series,x,y") and timing.json under dir.
EmittedFiles emit_report(const Report& report, const std::filesystem::path& dir);

// Runs the configured experiment, writing checkpoints and report files into
// cfg.out_dir. Returns the report that was emitted.
Report run_experiment(const ExperimentConfig& cfg);

// Human-readable summary of a report document; accuracies shown in percent.
std::string summarize_report(const nlohmann::json& report);

std::string format_number(double v);

Checkpoint classifier_to_checkpoint(const ClassifierModel& h, const nlohmann::json& meta);
ClassifierModel classifier_from_checkpoint(const Checkpoint& ckpt);
Checkpoint defense_to_checkpoint(const DefenseModel& d, const nlohmann::json& meta);
DefenseModel defense_from_checkpoint(const Checkpoint& ckpt);
// Records must be laid out as generate_attack_set produces them.
Checkpoint attack_set_to_checkpoint(const AttackSet& set, const nlohmann::json& meta);
AttackSet attack_set_from_checkpoint(const Checkpoint& ckpt);

}  // namespace dtlab
