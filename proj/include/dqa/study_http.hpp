#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "dqa/study_service.hpp"

namespace dqa {

// HTTP+JSON front end of a StudyService.
//
//   POST /studies                 {name, manifest, session_limit_minutes?, seed?, scale_min?, scale_max?} -> 201
//   POST /studies/{id}/sessions   {subject_id} -> 201
//   GET  /sessions/{id}/next      -> 200 {status: "trial" | "complete", ...}
//   POST /sessions/{id}/ratings   {trial_id, score} -> 200
//   GET  /studies/{id}/export     -> 200 text/csv raw score table
//   GET  /images/{token}          -> 200 image bytes
//
// Errors are {"error": message} with 400 (validation), 404 (unknown id),
// 409 (duplicate), 423 (session expired).
class StudyServer {
 public:
  // default_seed applies to studies created without an explicit seed.
  explicit StudyServer(StudyService& service, std::uint64_t default_seed = 0);
  ~StudyServer();
  StudyServer(const StudyServer&) = delete;
  StudyServer& operator=(const StudyServer&) = delete;

  // Port 0 picks a free port. Returns the bound port; throws Error on failure.
  int bind(const std::string& host, int port);
  // Serves until stop() is called.
  void run();
  void stop();
  // Blocks until run() is accepting connections.
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dqa
