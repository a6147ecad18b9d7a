#include "dqa/study_service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "dqa/error.hpp"
#include "dqa/text.hpp"

namespace dqa {

using json = nlohmann::json;
using std::chrono::milliseconds;

TimePoint system_now() { return std::chrono::floor<milliseconds>(std::chrono::system_clock::now()); }

std::vector<ScaleBand> rating_bands(double lo, double hi) {
  static const char* labels[] = {"Bad", "Poor", "Fair", "Good", "Excellent"};
  std::vector<ScaleBand> bands;
  const double step = (hi - lo) / 5.0;
  for (int k = 0; k < 5; ++k) bands.push_back({labels[k], lo + step * k, k == 4 ? hi : lo + step * (k + 1)});
  return bands;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string opaque(std::uint64_t secret, std::string_view tag) {
  static const char* hex = "0123456789abcdef";
  std::uint64_t hi = mix(secret ^ fnv1a(tag));
  std::uint64_t lo = mix(hi ^ secret);
  std::string out(32, '0');
  for (int k = 0; k < 16; ++k) {
    out[15 - k] = hex[hi & 0xF];
    out[31 - k] = hex[lo & 0xF];
    hi >>= 4;
    lo >>= 4;
  }
  return out;
}

std::string text_bound(double v) { return text::format_double(v); }

std::int64_t to_ms(TimePoint t) { return t.time_since_epoch().count(); }
TimePoint from_ms(std::int64_t v) { return TimePoint(milliseconds(v)); }

struct Pending {
  SampleRef sample;
  std::string trial_id;
  TimePoint fetched_at;
};

struct Subject {
  std::deque<SampleRef> queue;
  std::vector<CompletedTrial> completed;
  std::set<std::string> completed_ids;
  std::optional<std::string> active_session;
};

struct Study {
  std::string id;
  StudyConfig config;
  milliseconds limit{0};
  std::uint64_t secret = 0;
  Corpus corpus;
  std::vector<std::string> subject_order;
  std::map<std::string, Subject> subjects;
  std::size_t submissions = 0;
};

struct Session {
  std::string id;
  std::string study_id;
  std::string subject_id;
  TimePoint started_at;
  milliseconds elapsed{0};
  bool expired = false;
  std::optional<Pending> pending;
};

}  // namespace

struct StudyService::State {
  std::map<std::string, Study> studies;
  std::map<std::string, std::string> study_by_name;
  std::map<std::string, Session> sessions;
  std::map<std::string, std::filesystem::path> images;
  std::uint64_t next_study = 1;
  std::uint64_t next_session = 1;

  Study& study(const std::string& id) {
    auto it = studies.find(id);
    if (it == studies.end()) throw NotFoundError("unknown study '" + id + "'");
    return it->second;
  }
  Session& session(const std::string& id) {
    auto it = sessions.find(id);
    if (it == sessions.end()) throw NotFoundError("unknown session '" + id + "'");
    return it->second;
  }

  static std::string trial_id(const Study& s, const std::string& subject, SampleRef ref) {
    return opaque(s.secret, "trial\x1f" + subject + "\x1f" + s.corpus.item_id(ref) + "\x1f" + s.corpus.algorithm_id(ref));
  }
  static std::string reference_token(const Study& s, std::size_t item) {
    return opaque(s.secret, "reference\x1f" + s.corpus.items()[item].item_id);
  }
  static std::string candidate_token(const Study& s, SampleRef ref) {
    return opaque(s.secret, "candidate\x1f" + s.corpus.item_id(ref) + "\x1f" + s.corpus.algorithm_id(ref));
  }

  // Returns an unrated trial to the front of its subject's queue.
  void release(Session& session) {
    session.expired = true;
    if (session.pending) {
      studies.at(session.study_id).subjects.at(session.subject_id).queue.push_front(session.pending->sample);
      session.pending.reset();
    }
  }

  SessionInfo info(const std::string& id) {
    const Session& s = session(id);
    const Study& st = studies.at(s.study_id);
    const Subject& sub = st.subjects.at(s.subject_id);
    SessionInfo out;
    out.session_id = s.id;
    out.study_id = s.study_id;
    out.subject_id = s.subject_id;
    out.started_at = s.started_at;
    out.elapsed_active = s.elapsed;
    out.completed = sub.completed.size();
    out.remaining = st.corpus.sample_count() - sub.completed.size();
    out.expired = s.expired;
    return out;
  }

  void apply(const json& r) {
    const std::string type = r.at("type");
    if (type == "study") {
      Study s;
      s.id = r.at("id");
      s.config.name = r.at("name");
      s.config.manifest = r.at("manifest").get<std::string>();
      s.config.session_limit_minutes = r.at("session_limit_minutes");
      s.config.scale_min = r.at("scale_min");
      s.config.scale_max = r.at("scale_max");
      s.config.seed = r.at("seed");
      s.limit = milliseconds(std::llround(s.config.session_limit_minutes * 60000.0));
      s.secret = r.at("secret");
      s.corpus = load_manifest(s.config.manifest, {.verify_decode = false});
      for (std::size_t i = 0; i < s.corpus.item_count(); ++i) {
        images[reference_token(s, i)] = s.corpus.items()[i].rain_image;
      }
      for (const SampleRef ref : s.corpus.all_samples()) images[candidate_token(s, ref)] = s.corpus.image_path(ref);
      study_by_name[s.config.name] = s.id;
      next_study++;
      studies.emplace(s.id, std::move(s));
    } else if (type == "session") {
      Study& st = study(r.at("study"));
      const std::string subject = r.at("subject");
      auto [it, fresh] = st.subjects.try_emplace(subject);
      Subject& sub = it->second;
      if (fresh) {
        st.subject_order.push_back(subject);
        auto samples = st.corpus.all_samples();
        std::mt19937_64 rng(mix(st.config.seed ^ fnv1a(subject)));
        std::shuffle(samples.begin(), samples.end(), rng);
        sub.queue.assign(samples.begin(), samples.end());
      }
      if (sub.active_session) release(sessions.at(*sub.active_session));
      Session s;
      s.id = r.at("id");
      s.study_id = st.id;
      s.subject_id = subject;
      s.started_at = from_ms(r.at("at"));
      sub.active_session = s.id;
      next_session++;
      sessions.emplace(s.id, std::move(s));
    } else if (type == "fetch") {
      Session& s = session(r.at("session"));
      Study& st = studies.at(s.study_id);
      Subject& sub = st.subjects.at(s.subject_id);
      const SampleRef ref = sub.queue.front();
      sub.queue.pop_front();
      s.pending = Pending{ref, trial_id(st, s.subject_id, ref), from_ms(r.at("at"))};
    } else if (type == "rating") {
      Session& s = session(r.at("session"));
      Study& st = studies.at(s.study_id);
      Subject& sub = st.subjects.at(s.subject_id);
      const TimePoint at = from_ms(r.at("at"));
      s.elapsed += at - s.pending->fetched_at;
      sub.completed.push_back({s.pending->trial_id, s.pending->sample, r.at("score").get<double>(), at});
      sub.completed_ids.insert(s.pending->trial_id);
      s.pending.reset();
      st.submissions++;
    } else if (type == "expire") {
      Session& s = session(r.at("session"));
      s.elapsed = studies.at(s.study_id).limit;
      release(s);
      auto& sub = studies.at(s.study_id).subjects.at(s.subject_id);
      if (sub.active_session == s.id) sub.active_session.reset();
    } else {
      throw ParseError("unknown log record type '" + type + "'");
    }
  }
};

StudyService::StudyService(std::filesystem::path log_path, Clock clock)
    : log_path_(std::move(log_path)), clock_(std::move(clock)), state_(std::make_unique<State>()) {
  if (std::filesystem::exists(log_path_)) {
    std::ifstream in(log_path_, std::ios::binary);
    std::string line;
    std::size_t line_no = 0;
    std::uintmax_t good_bytes = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const bool terminated = !in.eof();
      if (line.empty()) {
        good_bytes += 1;
        continue;
      }
      json record;
      try {
        record = json::parse(line);
      } catch (const json::exception& e) {
        // A torn final write is dropped; anything else is corruption.
        if (!terminated) break;
        throw ParseError("study log line " + std::to_string(line_no) + ": " + e.what());
      }
      try {
        state_->apply(record);
      } catch (const json::exception& e) {
        throw ParseError("study log line " + std::to_string(line_no) + ": " + e.what());
      }
      good_bytes += line.size() + (terminated ? 1 : 0);
    }
    in.close();
    if (good_bytes < std::filesystem::file_size(log_path_)) std::filesystem::resize_file(log_path_, good_bytes);
  } else if (log_path_.has_parent_path()) {
    std::filesystem::create_directories(log_path_.parent_path());
  }
  fd_ = ::open(log_path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw IntegrityError("cannot open study log " + log_path_.string() + ": " + std::strerror(errno));
}

StudyService::~StudyService() {
  if (fd_ >= 0) ::close(fd_);
}

void StudyService::append(const std::string& line) {
  std::string data = line + '\n';
  const char* p = data.data();
  std::size_t left = data.size();
  while (left > 0) {
    const ssize_t n = ::write(fd_, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IntegrityError("study log write failed: " + std::string(std::strerror(errno)));
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) throw IntegrityError("study log fsync failed: " + std::string(std::strerror(errno)));
}

std::string StudyService::create_study(const StudyConfig& config) {
  std::lock_guard lock(mutex_);
  if (config.name.empty()) throw PreconditionError("study name must not be empty");
  if (!(config.session_limit_minutes > 0.0) || !std::isfinite(config.session_limit_minutes)) {
    throw PreconditionError("session limit must be positive");
  }
  if (!(config.scale_min < config.scale_max)) throw PreconditionError("scale bounds must increase");
  if (state_->study_by_name.contains(config.name)) throw ConflictError("study '" + config.name + "' already exists");
  Corpus corpus;
  try {
    corpus = load_manifest(config.manifest);
  } catch (const Error& e) {
    throw PreconditionError(std::string("invalid study manifest: ") + e.what());
  }
  const std::string id = "study-" + std::to_string(state_->next_study);
  const json record = {{"type", "study"},
                       {"id", id},
                       {"name", config.name},
                       {"manifest", std::filesystem::absolute(config.manifest).lexically_normal().string()},
                       {"session_limit_minutes", config.session_limit_minutes},
                       {"scale_min", config.scale_min},
                       {"scale_max", config.scale_max},
                       {"seed", config.seed},
                       {"secret", std::uint64_t{std::random_device{}()} << 32 | std::random_device{}()},
                       {"at", to_ms(clock_())}};
  append(record.dump());
  state_->apply(record);
  return id;
}

SessionInfo StudyService::open_session(const std::string& study_id, const std::string& subject_id) {
  std::lock_guard lock(mutex_);
  state_->study(study_id);
  if (subject_id.empty() || subject_id.find_first_of(",\r\n") != std::string::npos) {
    throw PreconditionError("subject id must be non-empty and contain no commas or line breaks");
  }
  const std::string id = "session-" + std::to_string(state_->next_session);
  const json record = {{"type", "session"}, {"id", id}, {"study", study_id}, {"subject", subject_id},
                       {"at", to_ms(clock_())}};
  append(record.dump());
  state_->apply(record);
  return state_->info(id);
}

NextTrial StudyService::next_trial(const std::string& session_id) {
  std::lock_guard lock(mutex_);
  Session& s = state_->session(session_id);
  if (s.expired) throw SessionExpiredError("session '" + session_id + "' has ended; open a new session to resume");
  Study& st = state_->studies.at(s.study_id);
  Subject& sub = st.subjects.at(s.subject_id);
  const TimePoint now = clock_();
  if (!s.pending) {
    if (sub.queue.empty()) return {};
    const json record = {{"type", "fetch"}, {"session", session_id}, {"at", to_ms(now)}};
    append(record.dump());
    state_->apply(record);
  } else if (s.elapsed + (now - s.pending->fetched_at) > st.limit) {
    const json record = {{"type", "expire"}, {"session", session_id}, {"at", to_ms(now)}};
    append(record.dump());
    state_->apply(record);
    throw SessionExpiredError("session '" + session_id + "' reached its time limit; take a break");
  }
  const Pending& p = *s.pending;
  TrialPresentation t;
  t.trial_id = p.trial_id;
  t.reference_token = State::reference_token(st, p.sample.item);
  t.candidate_token = State::candidate_token(st, p.sample);
  t.remaining = sub.queue.size();
  return {t};
}

std::size_t StudyService::submit_rating(const std::string& session_id, const std::string& trial_id, double score) {
  std::lock_guard lock(mutex_);
  Session& s = state_->session(session_id);
  if (s.expired) throw SessionExpiredError("session '" + session_id + "' has ended; open a new session to resume");
  Study& st = state_->studies.at(s.study_id);
  Subject& sub = st.subjects.at(s.subject_id);
  if (!std::isfinite(score) || score < st.config.scale_min || score > st.config.scale_max) {
    throw PreconditionError("score must lie in [" + text_bound(st.config.scale_min) + ", " +
                            text_bound(st.config.scale_max) + "]");
  }
  if (sub.completed_ids.contains(trial_id)) throw ConflictError("trial '" + trial_id + "' was already rated");
  if (!s.pending || s.pending->trial_id != trial_id) {
    throw NotFoundError("trial '" + trial_id + "' is not the one presented in this session");
  }
  const TimePoint now = clock_();
  if (s.elapsed + (now - s.pending->fetched_at) > st.limit) {
    const json record = {{"type", "expire"}, {"session", session_id}, {"at", to_ms(now)}};
    append(record.dump());
    state_->apply(record);
    throw SessionExpiredError("session '" + session_id + "' reached its time limit; the trial was requeued");
  }
  const json record = {{"type", "rating"}, {"session", session_id}, {"trial", trial_id}, {"score", score},
                       {"at", to_ms(now)}};
  append(record.dump());
  state_->apply(record);
  return sub.queue.size();
}

RawScoreTable StudyService::export_ratings(const std::string& study_id) const {
  std::lock_guard lock(mutex_);
  const Study& st = state_->study(study_id);
  RawScoreTable t;
  for (const SampleRef ref : st.corpus.all_samples()) t.items.push_back({st.corpus.item_id(ref), st.corpus.algorithm_id(ref)});
  const std::size_t n_alg = st.corpus.algorithm_count();
  for (const auto& subject : st.subject_order) {
    t.subjects.push_back(subject);
    std::vector<std::optional<double>> row(t.items.size());
    for (const auto& c : st.subjects.at(subject).completed) row[c.sample.item * n_alg + c.sample.algorithm] = c.score;
    t.scores.push_back(std::move(row));
  }
  return t;
}

SessionInfo StudyService::session(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  return state_->info(session_id);
}

StudyConfig StudyService::study_config(const std::string& study_id) const {
  std::lock_guard lock(mutex_);
  return state_->study(study_id).config;
}

std::size_t StudyService::trials_per_subject(const std::string& study_id) const {
  std::lock_guard lock(mutex_);
  return state_->study(study_id).corpus.sample_count();
}

std::size_t StudyService::submission_count(const std::string& study_id) const {
  std::lock_guard lock(mutex_);
  return state_->study(study_id).submissions;
}

std::vector<CompletedTrial> StudyService::completed_trials(const std::string& study_id,
                                                           const std::string& subject_id) const {
  std::lock_guard lock(mutex_);
  const Study& st = state_->study(study_id);
  auto it = st.subjects.find(subject_id);
  if (it == st.subjects.end()) throw NotFoundError("subject '" + subject_id + "' is not enrolled");
  return it->second.completed;
}

std::filesystem::path StudyService::image_path(const std::string& token) const {
  std::lock_guard lock(mutex_);
  auto it = state_->images.find(token);
  if (it == state_->images.end()) throw NotFoundError("unknown image");
  return it->second;
}

}  // namespace dqa
