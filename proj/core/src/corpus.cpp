#include "layerguard/corpus.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <boost/tokenizer.hpp>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "layerguard/error.hpp"
#include "layerguard/random.hpp"
#include "layerguard/text.hpp"

namespace layerguard {

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_read_failure, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw Error(ErrorCode::io_write_failure, "cannot write " + path.string());
  return out;
}

void check_written(const std::ofstream& out, const std::filesystem::path& path) {
  if (!out) throw Error(ErrorCode::io_write_failure, "write failed for " + path.string());
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& items) {
  return items[uniform_index(rng, items.size())];
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string chomp(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

// ---------------------------------------------------------------- csv

std::vector<std::string> split_csv_line(const std::string& line) {
  using Sep = boost::escaped_list_separator<char>;
  boost::tokenizer<Sep> tok(line, Sep('\\', ',', '"'));
  return {tok.begin(), tok.end()};
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\\") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

// ---------------------------------------------------------------- hypervisor

const std::string& HypervisorSchema::class_column() {
  static const std::string name = "event_class";
  return name;
}

const std::vector<std::string>& HypervisorSchema::categorical_columns() {
  static const std::vector<std::string> cols{"hypervisor_type", "operation", "user_role", "source_zone", "guest_os"};
  return cols;
}

const std::vector<std::vector<std::string>>& HypervisorSchema::category_values() {
  static const std::vector<std::vector<std::string>> values{
      {"VMware ESXi", "KVM", "Xen", "Hyper-V"},
      {"vm_start", "vm_stop", "snapshot_create", "snapshot_revert", "live_migrate", "config_change", "device_attach",
       "console_access"},
      {"admin", "operator", "service", "guest"},
      {"internal", "dmz", "external"},
      {"linux", "windows", "bsd"},
  };
  return values;
}

const std::vector<std::string>& HypervisorSchema::numeric_columns() {
  static const std::vector<std::string> cols{
      "cpu_util_pct",   "mem_util_pct",      "disk_read_mbps",       "disk_write_mbps", "net_in_mbps",
      "net_out_mbps",   "hypercall_rate",    "privileged_ops",       "vmexit_rate",     "snapshot_ops",
      "migration_events", "inter_vm_connections", "failed_auth",      "config_changes",  "interrupt_rate",
      "page_fault_rate", "timing_jitter_ms", "session_duration_s"};
  return cols;
}

std::vector<std::string> HypervisorSchema::header() {
  std::vector<std::string> h{class_column()};
  h.insert(h.end(), categorical_columns().begin(), categorical_columns().end());
  h.insert(h.end(), numeric_columns().begin(), numeric_columns().end());
  return h;
}

namespace {

// Benign baseline for each numeric column, in column order. Counts are
// Poisson-distributed, rates log-normal around the mean.
struct NumericProfile {
  double mean;
  bool count;
};

const std::array<NumericProfile, 18> kBenignProfile{{
    {35.0, false},  {48.0, false}, {40.0, false}, {25.0, false}, {60.0, false}, {45.0, false},
    {900.0, false}, {2.0, true},   {1500.0, false}, {0.3, true}, {0.2, true},   {3.0, true},
    {0.2, true},    {0.3, true},   {4000.0, false}, {300.0, false}, {1.5, false}, {900.0, false},
}};

struct AttackProfile {
  std::string name;
  std::vector<std::pair<std::size_t, double>> multipliers;  // numeric column -> factor
  std::vector<std::string> operations;
  std::vector<std::string> roles;
  std::vector<std::string> zones;
};

const std::vector<AttackProfile>& attack_profiles() {
  static const std::vector<AttackProfile> profiles{
      {"vm_lateral_movement",
       {{11, 5.0}, {5, 2.5}, {12, 8.0}, {4, 1.6}},
       {"console_access", "live_migrate"},
       {"operator", "service"},
       {"internal"}},
      {"vm_escape",
       {{6, 3.5}, {8, 3.0}, {7, 4.0}, {15, 2.5}},
       {"device_attach", "console_access"},
       {"guest"},
       {"internal", "dmz"}},
      {"snapshot_abuse",
       {{9, 15.0}, {2, 3.0}, {3, 2.0}},
       {"snapshot_create", "snapshot_revert"},
       {"guest", "service"},
       {"dmz", "external"}},
      {"hypervisor_dos",
       {{0, 2.4}, {14, 4.0}, {8, 2.2}, {16, 5.0}},
       {"vm_start", "vm_stop"},
       {"service", "guest"},
       {"external", "dmz"}},
      {"hyper_jacking",
       {{7, 3.5}, {13, 10.0}, {17, 0.25}, {10, 6.0}},
       {"config_change", "device_attach"},
       {"admin"},
       {"external"}},
  };
  return profiles;
}

const std::vector<std::string>& benign_operations() {
  static const std::vector<std::string> ops{"vm_start", "vm_stop", "snapshot_create", "live_migrate",
                                            "config_change", "console_access", "vm_start", "vm_stop"};
  return ops;
}

std::string format_number(double v, bool count) {
  return count ? fmt::format("{}", static_cast<std::int64_t>(v)) : fmt::format("{:.3f}", v);
}

Event make_hypervisor_event(Rng& rng, const std::string& class_name, const AttackProfile* profile,
                            const AttackProfile* ambiguous_blend, double blend) {
  const auto& cats = HypervisorSchema::category_values();
  const auto& nums = HypervisorSchema::numeric_columns();

  // Effective profile: attacks can look benign, benign events can carry a
  // partial attack signature.
  std::array<double, 18> factor;
  factor.fill(1.0);
  const AttackProfile* signature = profile != nullptr ? profile : ambiguous_blend;
  const double strength = profile != nullptr ? (ambiguous_blend != nullptr ? blend : 1.0) : blend;
  if (signature != nullptr) {
    for (const auto& [col, mult] : signature->multipliers) factor[col] = 1.0 + strength * (mult - 1.0);
  }

  const bool attack_like = signature != nullptr && unit_uniform(rng) < strength;
  std::string op = attack_like ? pick(rng, signature->operations) : pick(rng, benign_operations());
  std::string role = attack_like ? pick(rng, signature->roles) : pick(rng, std::vector<std::string>{"admin", "operator", "service", "operator"});
  std::string zone = attack_like ? pick(rng, signature->zones) : pick(rng, std::vector<std::string>{"internal", "internal", "dmz"});

  std::string raw = "[HYP EVENT] ";
  raw += "hypervisor_type=" + pick(rng, cats[0]);
  raw += ", operation=" + op;
  raw += ", user_role=" + role;
  raw += ", source_zone=" + zone;
  raw += ", guest_os=" + pick(rng, cats[4]);
  for (std::size_t i = 0; i < nums.size(); ++i) {
    const auto& p = kBenignProfile[i];
    const double mean = p.mean * factor[i];
    const double v = p.count ? static_cast<double>(poisson(rng, mean)) : mean * std::exp(normal(rng, 0.0, 0.35));
    raw += ", " + nums[i] + "=" + format_number(std::min(v, i < 2 ? 100.0 : 1e12), p.count);
  }

  Event e;
  e.layer = Layer::hypervisor;
  e.raw = std::move(raw);
  e.truth = class_name == "normal" ? 0 : 1;
  e.truth_class = class_name;
  return e;
}

}  // namespace

std::vector<Event> gen_hypervisor(const HypGenConfig& config) {
  std::size_t sum = 0;
  for (const auto& c : config.classes) sum += c.count;
  if (sum != config.total) {
    throw Error(ErrorCode::count_sum_mismatch,
                fmt::format("class counts sum to {}, expected {}", sum, config.total));
  }
  if (HypervisorSchema::header().size() != config.columns) {
    throw Error(ErrorCode::count_sum_mismatch,
                fmt::format("schema has {} columns, configured {}", HypervisorSchema::header().size(), config.columns));
  }

  Rng rng(config.seed);
  const auto& profiles = attack_profiles();
  std::vector<Event> events;
  events.reserve(config.total);
  for (const auto& cls : config.classes) {
    const AttackProfile* profile = nullptr;
    for (const auto& p : profiles) {
      if (p.name == cls.name) profile = &p;
    }
    if (cls.name != "normal" && profile == nullptr) profile = &profiles[events.size() % profiles.size()];
    for (std::size_t i = 0; i < cls.count; ++i) {
      const AttackProfile* blend_with = nullptr;
      double blend = 1.0;
      if (unit_uniform(rng) < config.ambiguity) {
        blend_with = &profiles[uniform_index(rng, profiles.size())];
        blend = uniform_real(rng, 0.0, 0.7);
      }
      events.push_back(make_hypervisor_event(rng, cls.name, cls.name == "normal" ? nullptr : profile, blend_with, blend));
    }
  }
  shuffle_in_place(events, rng);
  for (std::size_t i = 0; i < events.size(); ++i) events[i].id = default_event_id(Layer::hypervisor, i);
  return events;
}

// ---------------------------------------------------------------- network

std::vector<std::string> network_feature_columns(std::size_t n) {
  static const std::vector<std::string> cicids{
      "Dst Port",       "Protocol",        "Flow Duration",   "Tot Fwd Pkts",    "Tot Bwd Pkts",
      "TotLen Fwd Pkts", "TotLen Bwd Pkts", "Fwd Pkt Len Max", "Fwd Pkt Len Min", "Fwd Pkt Len Mean",
      "Fwd Pkt Len Std", "Bwd Pkt Len Max", "Bwd Pkt Len Min", "Bwd Pkt Len Mean", "Bwd Pkt Len Std",
      "Flow Byts/s",    "Flow Pkts/s",     "Flow IAT Mean",   "Flow IAT Std",    "Flow IAT Max",
      "Flow IAT Min",   "Fwd IAT Tot",     "Fwd IAT Mean",    "Fwd IAT Std",     "Fwd IAT Max",
      "Fwd IAT Min",    "Bwd IAT Tot",     "Bwd IAT Mean",    "Bwd IAT Std",     "Bwd IAT Max",
      "Bwd IAT Min",    "Fwd PSH Flags",   "Fwd Header Len",  "Bwd Header Len",  "Fwd Pkts/s",
      "Bwd Pkts/s",     "Pkt Len Min",     "Pkt Len Max",     "Pkt Len Mean",    "Pkt Len Std"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(i < cicids.size() ? cicids[i] : fmt::format("Feature {}", i + 1));
  }
  return out;
}

std::vector<Event> gen_network(const NetGenConfig& config) {
  if (config.features < 2) throw Error(ErrorCode::bad_config, "network generator needs at least 2 features");
  Rng rng(config.seed);
  const auto columns = network_feature_columns(config.features);

  // Unit direction separating the class means over the continuous columns.
  const std::size_t continuous = config.features - 2;
  std::vector<double> direction(continuous);
  double norm = 0.0;
  for (auto& d : direction) {
    d = standard_normal(rng);
    norm += d * d;
  }
  for (auto& d : direction) d /= std::sqrt(norm);

  struct AttackKind {
    const char* label;
    int port;
  };
  static const std::vector<AttackKind> kinds{
      {"FTP-BruteForce", 21}, {"SSH-Bruteforce", 22}, {"DoS attacks-Hulk", 80}, {"Bot", 8080}, {"DDOS attack-HOIC", 80}};
  static const std::vector<int> benign_ports{443, 53, 80, 3389, 443, 123};

  std::vector<Event> events;
  events.reserve(config.count);
  for (std::size_t i = 0; i < config.count; ++i) {
    const bool attack = unit_uniform(rng) < config.attack_fraction;
    const AttackKind* kind = attack ? &kinds[uniform_index(rng, kinds.size())] : nullptr;
    // Ports and protocol overlap between classes on purpose.
    const int port = attack && unit_uniform(rng) < 0.7 ? kind->port : pick(rng, benign_ports);
    const int protocol = port == 53 || port == 123 ? 17 : 6;

    Event e;
    e.layer = Layer::network;
    e.features.reserve(config.features);
    e.features.push_back(port);
    e.features.push_back(protocol);
    for (std::size_t j = 0; j < continuous; ++j) {
      // Carried values equal what the raw line prints.
      const double x = standard_normal(rng) + (attack ? config.separation * direction[j] : 0.0);
      e.features.push_back(std::stod(fmt::format("{:.4f}", x)));
    }
    e.raw = "[NIDS FLOW] ";
    for (std::size_t j = 0; j < config.features; ++j) {
      if (j > 0) e.raw += ", ";
      e.raw += columns[j] + "=" + (j < 2 ? fmt::format("{}", static_cast<int>(e.features[j])) : fmt::format("{:.4f}", e.features[j]));
    }
    e.truth = attack ? 1 : 0;
    e.truth_class = attack ? kind->label : "Benign";
    e.id = default_event_id(Layer::network, i);
    events.push_back(std::move(e));
  }
  return events;
}

// ---------------------------------------------------------------- host

namespace {

struct HostAttack {
  const char* name;
  std::vector<std::string> syscalls;
  std::vector<std::string> procs;
  std::vector<std::string> paths;
};

const std::vector<HostAttack>& host_attacks() {
  static const std::vector<HostAttack> attacks{
      {"privilege_escalation", {"setuid", "setgid", "capset", "execve", "chmod"}, {"pkexec", "sudo"},
       {"/etc/shadow", "/etc/sudoers"}},
      {"reverse_shell", {"connect", "dup2", "execve", "socket", "fork"}, {"nc", "bash"},
       {"/bin/sh", "/dev/tcp/10.0.0.5/4444"}},
      {"credential_access", {"ptrace", "process_vm_readv", "process_vm_writev", "keyctl"}, {"gdb", "python3"},
       {"/proc/1/mem", "/root/.ssh/id_rsa"}},
      {"crypto_miner", {"sched_setaffinity", "clone", "mprotect", "connect"}, {"kworkerds", "xmrig"},
       {"/tmp/.x/config.json", "/dev/shm/.m"}},
  };
  return attacks;
}

const std::vector<std::string> kSharedSyscalls{"read",  "write", "open",  "close", "stat",  "fstat",
                                               "mmap",  "futex", "poll",  "lseek", "brk",   "sendto",
                                               "recvfrom", "clock_gettime", "epoll_wait", "openat"};
const std::vector<std::string> kBenignSyscalls{"getdents64", "accept4", "setsockopt", "fsync", "rename",
                                               "fdatasync", "inotify_add_watch", "statfs"};
const std::vector<std::string> kSharedProcs{"nginx", "sshd", "cron", "systemd", "bash", "python3", "java", "mysqld"};
const std::vector<std::string> kBenignProcs{"logrotate", "rsyslogd", "postgres", "node"};
const std::vector<std::string> kSharedPaths{"/etc/hosts", "/usr/lib/libc.so.6", "/tmp/cache", "/proc/self/status",
                                            "/var/log/syslog"};
const std::vector<std::string> kBenignPaths{"/var/www/html/index.html", "/var/lib/mysql/ibdata1",
                                            "/var/log/nginx/access.log", "/home/app/config.yaml"};

}  // namespace

std::vector<Event> gen_hostlogs(const HostGenConfig& config) {
  Rng rng(config.seed);
  const auto& attacks = host_attacks();
  std::vector<Event> events;
  events.reserve(config.count);

  for (std::size_t i = 0; i < config.count; ++i) {
    const bool attack = unit_uniform(rng) < config.attack_fraction;
    const HostAttack* kind = attack ? &attacks[uniform_index(rng, attacks.size())] : nullptr;

    auto slot = [&](const std::vector<std::string>& shared, const std::vector<std::string>& benign,
                    auto attack_pool) -> std::string {
      if (unit_uniform(rng) < config.separation) {
        return attack ? pick(rng, attack_pool(*kind)) : pick(rng, benign);
      }
      if (!attack && unit_uniform(rng) < config.decoy_rate) {
        return pick(rng, attack_pool(attacks[uniform_index(rng, attacks.size())]));
      }
      return pick(rng, shared);
    };

    std::string line = "proc=" + slot(kSharedProcs, kBenignProcs, [](const HostAttack& a) -> const auto& { return a.procs; });
    line += fmt::format(" pid={} uid={}", 300 + uniform_index(rng, 60), pick(rng, std::vector<int>{0, 33, 1000, 1001}));
    std::vector<std::string> syscalls;
    for (std::size_t s = 0; s < config.syscalls_per_line; ++s) {
      syscalls.push_back(slot(kSharedSyscalls, kBenignSyscalls, [](const HostAttack& a) -> const auto& { return a.syscalls; }));
    }
    if (attack && syscalls.size() > 0) {
      std::size_t present = 0;
      for (const auto& sc : syscalls) {
        present += std::count(kind->syscalls.begin(), kind->syscalls.end(), sc) > 0 ? 1 : 0;
      }
      for (std::size_t k = present; k < std::min(config.min_attack_syscalls, syscalls.size()); ++k) {
        syscalls[uniform_index(rng, syscalls.size())] = pick(rng, kind->syscalls);
      }
    }
    line += " syscalls=";
    for (std::size_t s = 0; s < syscalls.size(); ++s) line += (s > 0 ? "," : "") + syscalls[s];
    line += " path=" + slot(kSharedPaths, kBenignPaths, [](const HostAttack& a) -> const auto& { return a.paths; });
    line += fmt::format(" dt={}ms", 1 + uniform_index(rng, 20));

    Event e;
    e.layer = Layer::host;
    e.raw = std::move(line);
    e.truth = attack ? 1 : 0;
    e.truth_class = attack ? kind->name : "normal";
    e.id = default_event_id(Layer::host, i);
    events.push_back(std::move(e));
  }
  return events;
}

// ---------------------------------------------------------------- split

std::pair<std::vector<Event>, std::vector<Event>> split_train_test(std::vector<Event> events, double ratio,
                                                                   std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw Error(ErrorCode::bad_split_ratio, fmt::format("split ratio {} outside (0, 1)", ratio));
  }
  Rng rng(seed);
  shuffle_in_place(events, rng);
  const auto cut = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(events.size())));
  std::vector<Event> test(std::make_move_iterator(events.begin() + static_cast<std::ptrdiff_t>(cut)),
                          std::make_move_iterator(events.end()));
  events.resize(cut);
  return {std::move(events), std::move(test)};
}

// ---------------------------------------------------------------- network csv

void write_network_csv(const std::filesystem::path& path, std::span<const Event> events,
                       const NetworkColumns& columns) {
  auto out = open_out(path);
  for (std::size_t j = 0; j < columns.features.size(); ++j) out << csv_escape(columns.features[j]) << ',';
  out << csv_escape(columns.label) << '\n';
  for (const auto& e : events) {
    if (e.features.size() != columns.features.size()) {
      throw Error(ErrorCode::dimension_mismatch, "event '" + e.id + "' does not match the column list");
    }
    for (double v : e.features) out << fmt::format("{}", v) << ',';
    out << csv_escape(e.truth_class.value_or(e.truth.value_or(0) == 1 ? "Attack" : "Benign")) << '\n';
  }
  check_written(out, path);
}

std::vector<Event> load_network_csv(const std::filesystem::path& path, const NetworkColumns& columns) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::parse_failure, path.string() + " is empty");
  auto header = split_csv_line(chomp(line));
  for (auto& h : header) {
    while (!h.empty() && std::isspace(static_cast<unsigned char>(h.front()))) h.erase(h.begin());
  }
  auto find_col = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  std::vector<std::size_t> feature_idx;
  for (const auto& c : columns.features) {
    auto idx = find_col(c);
    if (!idx) throw Error(ErrorCode::dimension_mismatch, "column '" + c + "' missing from " + path.string());
    feature_idx.push_back(*idx);
  }
  const auto label_idx = find_col(columns.label);
  const auto id_idx = find_col("event_id");

  std::vector<Event> events;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = chomp(line);
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::parse_failure, fmt::format("{}:{}: expected {} fields, got {}", path.string(), lineno,
                                                        header.size(), fields.size()));
    }
    Event e;
    e.layer = Layer::network;
    e.id = id_idx ? fields[*id_idx] : default_event_id(Layer::network, events.size());
    e.raw = "[NIDS FLOW] ";
    for (std::size_t j = 0; j < feature_idx.size(); ++j) {
      const std::string& cell = fields[feature_idx[j]];
      double v = 0.0;
      try {
        v = std::stod(cell);
      } catch (const std::exception&) {
        v = 0.0;
      }
      e.features.push_back(std::isfinite(v) ? v : 0.0);
      if (j > 0) e.raw += ", ";
      e.raw += columns.features[j] + "=" + cell;
    }
    if (label_idx) {
      const std::string& label = fields[*label_idx];
      e.truth = lower(label) == "benign" ? 0 : 1;
      e.truth_class = label;
    }
    events.push_back(std::move(e));
  }
  return events;
}

// ---------------------------------------------------------------- host logs

void write_host_logs(const std::filesystem::path& log_path, const std::filesystem::path& labels_path,
                     std::span<const Event> events) {
  auto log = open_out(log_path);
  auto labels = open_out(labels_path);
  labels << "event_id,truth\n";
  for (std::size_t i = 0; i < events.size(); ++i) {
    std::string raw = events[i].raw;
    std::replace(raw.begin(), raw.end(), '\n', ' ');
    log << raw << '\n';
    if (events[i].truth) labels << csv_escape(default_event_id(Layer::host, i)) << ',' << *events[i].truth << '\n';
  }
  check_written(log, log_path);
  check_written(labels, labels_path);
}

std::vector<Event> load_host_logs(const std::filesystem::path& log_path,
                                  const std::optional<std::filesystem::path>& labels_path) {
  std::unordered_map<std::string, int> truth;
  if (labels_path && !labels_path->empty()) {
    auto in = open_in(*labels_path);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      line = chomp(line);
      if (line.empty()) continue;
      auto fields = split_csv_line(line);
      if (fields.size() < 2) throw Error(ErrorCode::parse_failure, "bad label row: " + line);
      truth[fields[0]] = std::stoi(fields[1]);
    }
  }
  auto in = open_in(log_path);
  std::vector<Event> events;
  std::string line;
  while (std::getline(in, line)) {
    Event e;
    e.layer = Layer::host;
    e.id = default_event_id(Layer::host, events.size());
    e.raw = chomp(line);
    if (auto it = truth.find(e.id); it != truth.end()) e.truth = it->second;
    events.push_back(std::move(e));
  }
  return events;
}

// ---------------------------------------------------------------- hypervisor csv

void write_hypervisor_csv(const std::filesystem::path& path, std::span<const Event> events) {
  auto out = open_out(path);
  const auto header = HypervisorSchema::header();
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& e : events) {
    auto kv = parse_kv_record(e.raw);
    out << csv_escape(e.truth_class.value_or(e.truth.value_or(0) == 1 ? "attack" : "normal"));
    for (std::size_t i = 1; i < header.size(); ++i) {
      auto it = std::find_if(kv.begin(), kv.end(), [&](const auto& p) { return p.first == header[i]; });
      out << ',' << csv_escape(it == kv.end() ? std::string() : it->second);
    }
    out << '\n';
  }
  check_written(out, path);
}

std::vector<Event> load_hypervisor_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::parse_failure, path.string() + " is empty");
  const auto header = split_csv_line(chomp(line));
  const auto class_it = std::find(header.begin(), header.end(), HypervisorSchema::class_column());
  std::vector<Event> events;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = chomp(line);
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::parse_failure, fmt::format("{}:{}: expected {} fields, got {}", path.string(), lineno,
                                                        header.size(), fields.size()));
    }
    Event e;
    e.layer = Layer::hypervisor;
    e.id = default_event_id(Layer::hypervisor, events.size());
    e.raw = "[HYP EVENT] ";
    bool first = true;
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (class_it != header.end() && i == static_cast<std::size_t>(class_it - header.begin())) {
        e.truth_class = fields[i];
        e.truth = lower(fields[i]) == "normal" || lower(fields[i]) == "benign" ? 0 : 1;
        continue;
      }
      if (!first) e.raw += ", ";
      first = false;
      e.raw += header[i] + "=" + fields[i];
    }
    events.push_back(std::move(e));
  }
  return events;
}

// ---------------------------------------------------------------- replay csv

std::vector<ReplayRow> load_replay_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::parse_failure, path.string() + " is empty");
  const auto header = split_csv_line(chomp(line));
  auto col = [&](const char* name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorCode::parse_failure, fmt::format("{} lacks column {}", path.string(), name));
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_id = col("event_id"), c_layer = col("layer"), c_pred = col("pred_label"),
                    c_conf = col("confidence"), c_truth = col("truth");
  std::vector<ReplayRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = chomp(line);
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw Error(ErrorCode::parse_failure, fmt::format("{}:{}: wrong field count", path.string(), lineno));
    }
    ReplayRow r;
    r.event_id = f[c_id];
    auto layer = parse_layer(f[c_layer]);
    if (!layer) throw Error(ErrorCode::parse_failure, fmt::format("{}:{}: unknown layer '{}'", path.string(), lineno, f[c_layer]));
    r.layer = *layer;
    try {
      r.pred_label = std::stoi(f[c_pred]);
      r.confidence = std::stod(f[c_conf]);
      if (!f[c_truth].empty()) r.truth = std::stoi(f[c_truth]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::parse_failure, fmt::format("{}:{}: bad numeric field", path.string(), lineno));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_replay_csv(const std::filesystem::path& path, std::span<const ScoredEvent> events) {
  auto out = open_out(path);
  out << "event_id,layer,pred_label,confidence,truth\n";
  for (const auto& se : events) {
    out << csv_escape(se.event.id) << ',' << to_string(se.event.layer) << ',' << se.pred_label << ','
        << fmt::format("{:.6f}", se.confidence) << ',' << (se.event.truth ? std::to_string(*se.event.truth) : "")
        << '\n';
  }
  check_written(out, path);
}

}  // namespace layerguard
