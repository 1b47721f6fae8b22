#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "layerguard/event.hpp"
#include "layerguard/scoring.hpp"

namespace layerguard {

// ---------------------------------------------------------------- hypervisor

struct HypervisorClass {
  std::string name;
  std::size_t count = 0;
};

struct HypGenConfig {
  std::size_t total = 25000;
  std::vector<HypervisorClass> classes{{"normal", 12500},         {"vm_lateral_movement", 2541},
                                       {"vm_escape", 2501},       {"snapshot_abuse", 2500},
                                       {"hypervisor_dos", 2488},  {"hyper_jacking", 2470}};
  std::size_t columns = 24;
  double train_ratio = 0.8;
  // Share of events drawn from a blend of the benign and attack profiles.
  double ambiguity = 0.05;
  std::uint64_t seed = 0;
};

// Column layout of the generated hypervisor table. The first column is the
// event class; the remaining 23 are carried in Event::raw as key=value pairs.
struct HypervisorSchema {
  static const std::string& class_column();
  static const std::vector<std::string>& categorical_columns();
  static const std::vector<std::vector<std::string>>& category_values();
  static const std::vector<std::string>& numeric_columns();
  static std::vector<std::string> header();  // all 24 columns, class first
};

// Throws Error(count_sum_mismatch) when the class counts do not add up to
// total, or when the schema does not have the configured column count.
std::vector<Event> gen_hypervisor(const HypGenConfig& config);

// ---------------------------------------------------------------- network

struct NetGenConfig {
  std::size_t count = 25000;
  std::size_t features = 40;
  double separation = 6.0;  // distance between benign and attack class means, in noise stddevs
  double attack_fraction = 0.3;
  std::uint64_t seed = 0;
};

// CICIDS2018-style flow column names; the first `n` are used.
std::vector<std::string> network_feature_columns(std::size_t n = 40);

std::vector<Event> gen_network(const NetGenConfig& config);

// ---------------------------------------------------------------- host

struct HostGenConfig {
  std::size_t count = 25000;
  // Probability that a syscall slot is drawn from the class-specific pool.
  double separation = 0.15;
  // Probability that a benign slot borrows from the attack pool.
  double decoy_rate = 0.08;
  double attack_fraction = 0.4;
  std::size_t syscalls_per_line = 8;
  // Attack lines carry at least this many syscalls from their own template,
  // so ambiguity concentrates in decoy-bearing benign lines (false alarms).
  std::size_t min_attack_syscalls = 1;
  std::uint64_t seed = 0;
};

std::vector<Event> gen_hostlogs(const HostGenConfig& config);

// ---------------------------------------------------------------- split

// Seeded shuffle, then the first round(ratio * n) events form the train split.
// ratio must lie strictly inside (0, 1).
std::pair<std::vector<Event>, std::vector<Event>> split_train_test(std::vector<Event> events, double ratio,
                                                                   std::uint64_t seed);

// ---------------------------------------------------------------- file formats

struct NetworkColumns {
  std::vector<std::string> features = network_feature_columns(40);
  std::string label = "Label";
};

void write_network_csv(const std::filesystem::path& path, std::span<const Event> events,
                       const NetworkColumns& columns);
// Any label equal to "benign" (case-insensitive) is truth 0, anything else 1.
// A column named event_id, when present, supplies ids.
std::vector<Event> load_network_csv(const std::filesystem::path& path, const NetworkColumns& columns);

void write_host_logs(const std::filesystem::path& log_path, const std::filesystem::path& labels_path,
                     std::span<const Event> events);
// labels_path may be empty for unlabeled logs. Line n gets id "host-<n>".
std::vector<Event> load_host_logs(const std::filesystem::path& log_path,
                                  const std::optional<std::filesystem::path>& labels_path);

void write_hypervisor_csv(const std::filesystem::path& path, std::span<const Event> events);
std::vector<Event> load_hypervisor_csv(const std::filesystem::path& path);

struct ReplayRow {
  std::string event_id;
  Layer layer = Layer::network;
  int pred_label = 0;
  double confidence = 0.0;
  std::optional<int> truth;
};

// Header: event_id,layer,pred_label,confidence,truth
std::vector<ReplayRow> load_replay_csv(const std::filesystem::path& path);
void write_replay_csv(const std::filesystem::path& path, std::span<const ScoredEvent> events);

// Helpers shared by the readers.
std::vector<std::string> split_csv_line(const std::string& line);
std::string csv_escape(const std::string& field);

}  // namespace layerguard
