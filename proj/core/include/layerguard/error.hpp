#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace layerguard {

enum class ErrorCode {
  // event model
  reject_bad_truth,
  reject_empty_features,
  // scoring
  empty_corpus,
  dimension_mismatch,
  unfitted_extractor,
  missing_replay_entry,
  single_class_data,
  // gate 1
  empty_window,
  missing_truth,
  unlabeled_stream,
  stream_too_short,
  bad_action_set,
  // gate 2
  dim_mismatch,
  // gate 3
  llm_timeout,
  llm_http_error,
  no_feasible_threshold,
  bad_weights,
  // corpus io
  count_sum_mismatch,
  bad_split_ratio,
  io_read_failure,
  io_write_failure,
  parse_failure,
  // pipeline
  no_labeled_events,
  zero_static_baseline,
  partition_violation,
  bad_config,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries one of the codes above so the
// CLI and tests can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace layerguard
