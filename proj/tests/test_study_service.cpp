#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "dqa/error.hpp"
#include "study_client.hpp"
#include "support.hpp"

using namespace dqa;
using namespace dqa::testing;
using namespace std::chrono_literals;

namespace {

class StudyTest : public ::testing::Test {
 protected:
  void SetUp() override {
    manifest_ = write_corpus(dir_.path() / "corpus", {.items = 2, .algorithms = {"derain_x", "derain_y"}, .height = 8,
                                                      .width = 8, .labeled = false});
  }
  std::unique_ptr<StudyService> service() {
    return std::make_unique<StudyService>(dir_ / "log.jsonl", clock_.clock());
  }
  StudyConfig config(const std::string& name, double minutes = 30) {
    StudyConfig c;
    c.name = name;
    c.manifest = manifest_;
    c.session_limit_minutes = minutes;
    c.seed = 5;
    return c;
  }

  TempDir dir_{"dqa_study"};
  fs::path manifest_;
  ManualClock clock_;
};

}  // namespace

TEST_F(StudyTest, FreshSessionPresentsEveryPairOnceThenCompletes) {
  auto svc = service();
  const auto study = svc->create_study(config("s1"));
  EXPECT_EQ(svc->trials_per_subject(study), 4u);
  const auto session = svc->open_session(study, "alice");
  std::set<std::string> trials, candidates;
  for (int k = 0; k < 4; ++k) {
    const NextTrial n = svc->next_trial(session.session_id);
    ASSERT_TRUE(n.trial.has_value());
    EXPECT_EQ(n.trial->remaining, static_cast<std::size_t>(3 - k));
    EXPECT_TRUE(trials.insert(n.trial->trial_id).second);
    EXPECT_TRUE(candidates.insert(n.trial->candidate_token).second);
    // The reference is the rain image of the candidate's item.
    const auto ref = svc->image_path(n.trial->reference_token);
    EXPECT_NE(ref.filename().string().find("_rain"), std::string::npos);
    const auto cand = svc->image_path(n.trial->candidate_token).filename().string();
    EXPECT_EQ(cand.substr(0, cand.find('_')), ref.filename().string().substr(0, ref.filename().string().find('_')));
    for (const auto& id : {n.trial->trial_id, n.trial->candidate_token, n.trial->reference_token}) {
      EXPECT_EQ(id.find("derain"), std::string::npos);
    }
    clock_.advance(5s);
    svc->submit_rating(session.session_id, n.trial->trial_id, 50.5);
  }
  EXPECT_FALSE(svc->next_trial(session.session_id).trial.has_value());
  const RawScoreTable t = svc->export_ratings(study);
  ASSERT_EQ(t.subjects, std::vector<std::string>{"alice"});
  EXPECT_EQ(t.present_count(), 4u);
  EXPECT_EQ(svc->session(session.session_id).elapsed_active, 20s);
}

TEST_F(StudyTest, PendingTrialIsReturnedUntilRated) {
  auto svc = service();
  const auto study = svc->create_study(config("s1"));
  const auto s = svc->open_session(study, "alice");
  const auto a = svc->next_trial(s.session_id);
  const auto b = svc->next_trial(s.session_id);
  EXPECT_EQ(a.trial->trial_id, b.trial->trial_id);
}

TEST_F(StudyTest, RatingValidation) {
  auto svc = service();
  const auto study = svc->create_study(config("s1"));
  EXPECT_THROW(svc->create_study(config("s1")), ConflictError);
  const auto s = svc->open_session(study, "alice");
  const auto t = svc->next_trial(s.session_id).trial->trial_id;
  EXPECT_THROW(svc->submit_rating(s.session_id, t, 0.0), PreconditionError);
  EXPECT_THROW(svc->submit_rating(s.session_id, t, 100.5), PreconditionError);
  EXPECT_THROW(svc->submit_rating(s.session_id, t, std::nan("")), PreconditionError);
  EXPECT_THROW(svc->submit_rating(s.session_id, "0123", 50.0), NotFoundError);
  EXPECT_THROW(svc->submit_rating("session-99", t, 50.0), NotFoundError);
  svc->submit_rating(s.session_id, t, 1.0);
  EXPECT_THROW(svc->submit_rating(s.session_id, t, 40.0), ConflictError);
  EXPECT_THROW(svc->open_session("study-9", "bob"), NotFoundError);
  EXPECT_THROW(svc->open_session(study, "a,b"), PreconditionError);
  EXPECT_THROW(svc->export_ratings("study-9"), NotFoundError);
}

TEST_F(StudyTest, SubjectsGetIndependentPermutations) {
  const fs::path big = write_corpus(dir_.path() / "big", {.items = 6, .height = 8, .width = 8, .labeled = false});
  auto svc = service();
  StudyConfig c = config("big");
  c.manifest = big;
  const auto study = svc->create_study(c);
  auto order = [&](const std::string& subject) {
    const auto s = svc->open_session(study, subject);
    std::vector<std::string> cands;
    while (auto n = svc->next_trial(s.session_id).trial) {
      cands.push_back(n->candidate_token);
      svc->submit_rating(s.session_id, n->trial_id, 30.0);
    }
    return cands;
  };
  const auto alice = order("alice");
  const auto bob = order("bob");
  ASSERT_EQ(alice.size(), 12u);
  EXPECT_EQ(std::set<std::string>(alice.begin(), alice.end()), std::set<std::string>(bob.begin(), bob.end()));
  EXPECT_NE(alice, bob);
}

TEST_F(StudyTest, ExpiryRequeuesTrialAndNewSessionResumes) {
  auto svc = service();
  const auto study = svc->create_study(config("short", 1.0));
  const auto s1 = svc->open_session(study, "alice");
  const auto first = svc->next_trial(s1.session_id).trial->trial_id;
  clock_.advance(20s);
  svc->submit_rating(s1.session_id, first, 60.0);
  clock_.advance(10min);  // breaks between trials do not count
  const auto second = svc->next_trial(s1.session_id).trial->trial_id;
  clock_.advance(41s);  // 61 s of active time in total
  EXPECT_THROW(svc->submit_rating(s1.session_id, second, 60.0), SessionExpiredError);
  EXPECT_TRUE(svc->session(s1.session_id).expired);
  EXPECT_EQ(svc->session(s1.session_id).elapsed_active, 1min);
  EXPECT_THROW(svc->next_trial(s1.session_id), SessionExpiredError);

  const auto s2 = svc->open_session(study, "alice");
  EXPECT_EQ(s2.completed, 1u);
  EXPECT_EQ(svc->next_trial(s2.session_id).trial->trial_id, second);
  svc->submit_rating(s2.session_id, second, 70.0);
  EXPECT_EQ(svc->submission_count(study), 2u);
}

TEST_F(StudyTest, ExpiryDetectedWhenFetchingAStalePendingTrial) {
  auto svc = service();
  const auto study = svc->create_study(config("short", 0.5));
  const auto s = svc->open_session(study, "alice");
  svc->next_trial(s.session_id);
  clock_.advance(30s);
  EXPECT_NO_THROW(svc->next_trial(s.session_id));  // exactly at the limit
  clock_.advance(1ms);
  EXPECT_THROW(svc->next_trial(s.session_id), SessionExpiredError);
}

TEST_F(StudyTest, NewSessionClosesThePreviousOne) {
  auto svc = service();
  const auto study = svc->create_study(config("s1"));
  const auto s1 = svc->open_session(study, "alice");
  const auto pending = svc->next_trial(s1.session_id).trial->trial_id;
  const auto s2 = svc->open_session(study, "alice");
  EXPECT_THROW(svc->next_trial(s1.session_id), SessionExpiredError);
  EXPECT_EQ(svc->next_trial(s2.session_id).trial->trial_id, pending);
}

TEST_F(StudyTest, LogReplayRestoresState) {
  std::string study;
  std::string session;
  std::string pending;
  std::ostringstream before;
  {
    auto svc = service();
    study = svc->create_study(config("persist", 1.0));
    for (const char* subject : {"alice", "bob"}) {
      const auto s = svc->open_session(study, subject);
      session = s.session_id;
      auto n = svc->next_trial(session);
      clock_.advance(3s);
      svc->submit_rating(session, n.trial->trial_id, 42.25);
      pending = svc->next_trial(session).trial->trial_id;
    }
    write_raw_scores(before, svc->export_ratings(study));
  }
  // A torn write at the end of the log is discarded on replay.
  std::ofstream(dir_ / "log.jsonl", std::ios::app) << "{\"type\": \"rat";
  auto svc = service();
  std::ostringstream after;
  write_raw_scores(after, svc->export_ratings(study));
  EXPECT_EQ(after.str(), before.str());
  EXPECT_EQ(svc->session(session).elapsed_active, 3s);
  EXPECT_EQ(svc->next_trial(session).trial->trial_id, pending);
  EXPECT_THROW(svc->create_study(config("persist")), ConflictError);
  const auto other = svc->create_study(config("second"));
  EXPECT_NE(other, study);
  clock_.advance(1s);
  svc->submit_rating(session, pending, 10.0);
  EXPECT_EQ(svc->submission_count(study), 3u);
}

TEST_F(StudyTest, ExportCountEqualsSubmissions) {
  auto svc = service();
  const auto study = svc->create_study(config("count"));
  EXPECT_EQ(svc->export_ratings(study).present_count(), 0u);
  std::size_t submitted = 0;
  const std::vector<std::pair<std::string, int>> plan{{"a", 1}, {"b", 3}, {"c", 2}};
  for (const auto& [subject, n] : plan) {
    const auto s = svc->open_session(study, subject);
    for (int k = 0; k < n; ++k) {
      svc->submit_rating(s.session_id, svc->next_trial(s.session_id).trial->trial_id, 20.0 + k);
      ++submitted;
      EXPECT_EQ(svc->export_ratings(study).present_count(), submitted);
    }
  }
  const RawScoreTable t = svc->export_ratings(study);
  EXPECT_EQ(t.subjects.size(), 3u);
  EXPECT_EQ(t.items.size(), 4u);
}

TEST_F(StudyTest, HttpEndpointsAndStatusCodes) {
  auto svc = service();
  LiveServer server(*svc);
  auto c = server.client();

  Response created = call(c, "POST", "/studies", {{"name", "web"}, {"manifest", manifest_.string()},
                                                  {"session_limit_minutes", 1}, {"seed", 3}});
  ASSERT_EQ(created.status, 201) << created.raw;
  EXPECT_EQ(created.body.at("trials_per_subject"), 4);
  EXPECT_EQ(created.body.at("scale").at("bands").size(), 5u);
  const std::string study = created.body.at("study_id");
  EXPECT_EQ(call(c, "POST", "/studies", {{"name", "web"}, {"manifest", manifest_.string()}}).status, 409);
  EXPECT_EQ(call(c, "POST", "/studies", {{"name", "x"}, {"manifest", "/nonexistent"}}).status, 400);
  EXPECT_EQ(call(c, "POST", "/studies", {{"name", "x"}, {"manifest", manifest_.string()}, {"extra", 1}}).status, 400);
  EXPECT_EQ(call(c, "POST", "/studies/study-42/sessions", {{"subject_id", "a"}}).status, 404);
  EXPECT_EQ(call(c, "GET", "/sessions/session-42/next").status, 404);

  const Response session = call(c, "POST", "/studies/" + study + "/sessions", {{"subject_id", "alice"}});
  ASSERT_EQ(session.status, 201);
  const std::string sid = session.body.at("session_id");
  const Response next = call(c, "GET", "/sessions/" + sid + "/next");
  ASSERT_EQ(next.status, 200);
  EXPECT_EQ(next.body.at("status"), "trial");
  const std::string trial = next.body.at("trial_id");
  EXPECT_EQ(next.body.dump().find("derain"), std::string::npos);

  auto image = c.Get(next.body.at("reference_image").get<std::string>());
  ASSERT_TRUE(image);
  EXPECT_EQ(image->status, 200);
  EXPECT_EQ(image->get_header_value("Content-Type"), "image/png");
  std::ifstream rain(svc->image_path(next.body.at("reference_image").get<std::string>().substr(8)), std::ios::binary);
  EXPECT_EQ(image->body, std::string((std::istreambuf_iterator<char>(rain)), {}));
  EXPECT_EQ(c.Get("/images/abcdef")->status, 404);

  EXPECT_EQ(call(c, "POST", "/sessions/" + sid + "/ratings", {{"trial_id", trial}, {"score", 0}}).status, 400);
  EXPECT_EQ(call(c, "POST", "/sessions/" + sid + "/ratings", {{"trial_id", trial}, {"score", "50"}}).status, 400);
  EXPECT_EQ(call(c, "POST", "/sessions/" + sid + "/ratings", {{"trial_id", "zz"}, {"score", 50}}).status, 404);
  EXPECT_EQ(call(c, "POST", "/sessions/" + sid + "/ratings", {{"trial_id", trial}, {"score", 50.5}}).status, 200);
  EXPECT_EQ(call(c, "POST", "/sessions/" + sid + "/ratings", {{"trial_id", trial}, {"score", 50.5}}).status, 409);

  const Response second = call(c, "GET", "/sessions/" + sid + "/next");
  clock_.advance(61s);
  const Response late =
      call(c, "POST", "/sessions/" + sid + "/ratings", {{"trial_id", second.body.at("trial_id")}, {"score", 50}});
  EXPECT_EQ(late.status, 423);
  EXPECT_EQ(call(c, "GET", "/sessions/" + sid + "/next").status, 423);

  auto exported = c.Get("/studies/" + study + "/export");
  ASSERT_TRUE(exported);
  EXPECT_EQ(exported->status, 200);
  std::istringstream text(exported->body);
  EXPECT_EQ(read_raw_scores(text).present_count(), 1u);
  EXPECT_EQ(c.Get("/studies/nope/export")->status, 404);
  EXPECT_EQ(c.Post("/studies", "not json", "application/json")->status, 400);
}

TEST_F(StudyTest, ScriptedClientCompletesTwoSubjects) {
  auto svc = service();
  LiveServer server(*svc);
  auto c = server.client();
  const Response created = call(c, "POST", "/studies", {{"name", "scripted"}, {"manifest", manifest_.string()}});
  const std::string study = created.body.at("study_id");
  const ScriptedRun run = run_subjects(c, study, {"alice", "bob"});
  EXPECT_TRUE(run.completed_all) << (run.problems.empty() ? "" : run.problems.front());
  EXPECT_EQ(run.submissions, 8u);
  for (const auto& [subject, cands] : run.candidates_by_subject) {
    EXPECT_EQ(std::set<std::string>(cands.begin(), cands.end()).size(), 4u) << subject;
  }
  auto exported = c.Get("/studies/" + study + "/export");
  std::istringstream text(exported->body);
  const RawScoreTable t = read_raw_scores(text);
  EXPECT_EQ(t.present_count(), run.submissions);
  t.validate();
}
