#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dqa/corpus.hpp"
#include "dqa/subjective.hpp"

namespace dqa {

using TimePoint = std::chrono::sys_time<std::chrono::milliseconds>;
using Clock = std::function<TimePoint()>;

TimePoint system_now();

struct StudyConfig {
  std::string name;
  std::filesystem::path manifest;
  double session_limit_minutes = 30.0;
  double scale_min = 1.0;
  double scale_max = 100.0;
  std::uint64_t seed = 0;
};

struct ScaleBand {
  std::string label;
  double low = 0.0;
  double high = 0.0;
};

// Five labeled bands over the continuous scale.
std::vector<ScaleBand> rating_bands(double scale_min, double scale_max);

struct TrialPresentation {
  std::string trial_id;
  std::string reference_token;  // rain image, always shown on the left
  std::string candidate_token;  // de-rained version, right
  std::size_t remaining = 0;    // queued trials after this one
};

struct NextTrial {
  std::optional<TrialPresentation> trial;  // empty when the subject has rated everything
};

struct SessionInfo {
  std::string session_id;
  std::string study_id;
  std::string subject_id;
  TimePoint started_at;
  std::chrono::milliseconds elapsed_active{0};
  std::size_t remaining = 0;
  std::size_t completed = 0;
  bool expired = false;
};

struct CompletedTrial {
  std::string trial_id;
  SampleRef sample;
  double score = 0.0;
  TimePoint rated_at;
};

// Study administration with an append-only JSON-lines log. Every accepted
// mutation is written (and flushed to disk) before it is applied, and the log
// is replayed on construction. Errors: PreconditionError (invalid input),
// NotFoundError, ConflictError (duplicates), SessionExpiredError.
class StudyService {
 public:
  explicit StudyService(std::filesystem::path log_path, Clock clock = system_now);
  ~StudyService();
  StudyService(const StudyService&) = delete;
  StudyService& operator=(const StudyService&) = delete;

  std::string create_study(const StudyConfig& config);
  // Enrolls the subject on first use. Opening a session closes the subject's
  // earlier sessions; an unrated trial they held goes back to the queue front.
  SessionInfo open_session(const std::string& study_id, const std::string& subject_id);
  // Returns the pending trial again until it is rated.
  NextTrial next_trial(const std::string& session_id);
  // Returns the number of trials still queued for the subject.
  std::size_t submit_rating(const std::string& session_id, const std::string& trial_id, double score);
  RawScoreTable export_ratings(const std::string& study_id) const;

  SessionInfo session(const std::string& session_id) const;
  StudyConfig study_config(const std::string& study_id) const;
  std::size_t trials_per_subject(const std::string& study_id) const;
  std::size_t submission_count(const std::string& study_id) const;
  std::vector<CompletedTrial> completed_trials(const std::string& study_id, const std::string& subject_id) const;
  // Path of the image behind an opaque token.
  std::filesystem::path image_path(const std::string& token) const;

  struct State;

 private:
  void append(const std::string& line);

  std::filesystem::path log_path_;
  Clock clock_;
  int fd_ = -1;
  mutable std::mutex mutex_;
  std::unique_ptr<State> state_;
};

}  // namespace dqa
