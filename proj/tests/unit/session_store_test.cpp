#include <fstream>
#include <regex>
#include <set>
#include <thread>

#include "facegen/session_store.hpp"
#include "test_support.hpp"

using namespace facegen;
using facegen::testing::TempDir;

namespace {

Pipeline make_pipeline() {
  ArchitectureConfig cfg;
  cfg.conv = {{4, 3}};
  cfg.fc = {16};
  return Pipeline(std::make_shared<const RegressorModel>(init_model(cfg, 2)), std::make_shared<HashEmbedder>(),
                  std::make_shared<ToyGenerator>());
}

RefineRequest with_text(std::string text, std::optional<double> alpha = std::nullopt, std::uint64_t seed = 0) {
  RefineRequest r;
  r.text = std::move(text);
  r.alpha = alpha;
  r.variants = VariantRequest{4, 0.2, seed};
  return r;
}

RefineRequest from_selection(std::uint64_t seed = 0) {
  RefineRequest r;
  r.variants = VariantRequest{4, 0.2, seed};
  return r;
}

}  // namespace

TEST_CASE("create then get gives an empty active session") {
  TempDir d("sessions");
  SessionStore store(d.path());
  const auto s = store.create();
  CHECK(std::regex_match(s.id, std::regex("s[0-9a-f]{16}")));
  CHECK(s.status == SessionStatus::Active);
  CHECK(s.steps.empty());
  CHECK_FALSE(s.created_at.empty());
  CHECK(store.get(s.id) == s);
  CHECK(std::filesystem::exists(d / (s.id + ".jsonl")));
  CHECK(store.create().id != s.id);
}

TEST_CASE("unknown and malformed ids are not found") {
  TempDir d("sessions-404");
  SessionStore store(d.path());
  CHECK_FAILS_WITH(store.get("s0000000000000000"), ErrorKind::NotFound);
  for (const char* bad : {"", "../secrets", "a/b", "has space", "x.jsonl"}) CHECK_FAILS_WITH(store.get(bad), ErrorKind::NotFound);
  CHECK_FAILS_WITH(store.get(std::string(65, 'a')), ErrorKind::NotFound);
  CHECK_FAILS_WITH(store.close("s0000000000000000"), ErrorKind::NotFound);
}

TEST_CASE("three steps survive a restart with deep equality") {
  TempDir d("sessions-replay");
  const auto p = make_pipeline();
  RefinementSession before;
  {
    SessionStore store(d.path());
    const auto id = store.create().id;
    store.refine(id, p, with_text("a young woman with long blonde hair", std::nullopt, 1));
    CHECK(SessionStore::replay(d / (id + ".jsonl")) == store.get(id));
    store.select(id, 0, 2);
    CHECK(SessionStore::replay(d / (id + ".jsonl")) == store.get(id));
    store.refine(id, p, with_text("she is smiling", 0.5, 2));
    store.select(id, 1, 0);
    store.refine(id, p, from_selection(3));
    CHECK(SessionStore::replay(d / (id + ".jsonl")) == store.get(id));
    before = store.get(id);
  }
  REQUIRE(before.steps.size() == 3);
  SessionStore restarted(d.path());
  const auto after = restarted.get(before.id);
  CHECK(after == before);
  CHECK(after.steps[0].selected == std::optional<std::size_t>(2));
  CHECK(after.steps[2].text.empty());
  // The restarted store keeps appending to the same log.
  restarted.close(before.id);
  CHECK(SessionStore::replay(d / (before.id + ".jsonl")).status == SessionStatus::Closed);
}

TEST_CASE("closed sessions reject further changes") {
  SessionStore store;
  const auto p = make_pipeline();
  const auto id = store.create().id;
  store.refine(id, p, with_text("an old man"));
  const auto closed = store.close(id);
  CHECK(closed.status == SessionStatus::Closed);
  CHECK_FAILS_WITH(store.refine(id, p, with_text("an old man")), ErrorKind::SessionClosed);
  CHECK_FAILS_WITH(store.select(id, 0, 0), ErrorKind::SessionClosed);
  CHECK_FAILS_WITH(store.close(id), ErrorKind::SessionClosed);
  CHECK(store.get(id).steps.size() == 1);
}

TEST_CASE("selection must address an existing variant") {
  SessionStore store;
  const auto p = make_pipeline();
  const auto id = store.create().id;
  CHECK_FAILS_WITH(store.select(id, 0, 0), ErrorKind::InvalidSelection);
  store.refine(id, p, with_text("a smiling girl"));
  CHECK_FAILS_WITH(store.select(id, 0, 4), ErrorKind::InvalidSelection);
  CHECK_FAILS_WITH(store.select(id, 1, 0), ErrorKind::InvalidSelection);
  CHECK(store.select(id, 0, 3).selected == std::optional<std::size_t>(3));
}

TEST_CASE("blend rules") {
  SessionStore store;
  const auto p = make_pipeline();
  const auto id = store.create().id;
  const std::string t1 = "a young man with short dark hair", t2 = "he has a beard and glasses";

  SUBCASE("first step forces alpha to 1") {
    const auto s = store.refine(id, p, with_text(t1, 0.3));
    CHECK(s.alpha == 1.0);
    CHECK(s.base == p.latent_for_text(t1));
    CHECK(s.variants == variant_latents(s.base, s.request));
  }
  SUBCASE("alpha 0 keeps the selected latent exactly") {
    store.refine(id, p, with_text(t1));
    const auto chosen = store.select(id, 0, 1).variants[1];
    const auto s = store.refine(id, p, with_text(t2, 0.0));
    CHECK(s.alpha == 0.0);
    CHECK(s.base == chosen);
  }
  SUBCASE("alpha 0.5 is the element-wise midpoint") {
    store.refine(id, p, with_text(t1));
    const auto chosen = store.select(id, 0, 2).variants[2];
    const auto s = store.refine(id, p, with_text(t2, 0.5));
    const auto f = p.latent_for_text(t2);
    for (std::size_t i = 0; i < kLatentDim; ++i) {
      CHECK(s.base[i] == static_cast<float>((static_cast<double>(f[i]) + static_cast<double>(chosen[i])) / 2.0));
    }
  }
  SUBCASE("no text continues from the selection") {
    store.refine(id, p, with_text(t1));
    const auto chosen = store.select(id, 0, 0).variants[0];
    const auto s = store.refine(id, p, from_selection(9));
    CHECK(s.alpha == 0.0);
    CHECK(s.base == chosen);
    CHECK(s.text.empty());
  }
  SUBCASE("the most recent step with a selection wins") {
    store.refine(id, p, with_text(t1, std::nullopt, 1));
    store.refine(id, p, with_text(t2, std::nullopt, 2));
    store.select(id, 1, 1);
    const auto older = store.select(id, 0, 3).variants[3];
    const auto later = store.get(id).steps[1].variants[1];
    CHECK(store.get(id).latest_selection() == later);
    CHECK_FALSE(older == later);
    CHECK(store.refine(id, p, from_selection()).base == later);
  }
  SUBCASE("invalid requests") {
    CHECK_FAILS_WITH(store.refine(id, p, from_selection()), ErrorKind::InvalidRequest);
    CHECK_FAILS_WITH(store.refine(id, p, with_text(t1, 1.5)), ErrorKind::InvalidRequest);
    CHECK_FAILS_WITH(store.refine(id, p, with_text(t1, -0.1)), ErrorKind::InvalidRequest);
    CHECK_FAILS_WITH(store.refine(id, p, with_text("the a an")), ErrorKind::EmptyDescription);
    auto too_many = with_text(t1);
    too_many.variants.k = 33;
    CHECK_FAILS_WITH(store.refine(id, p, too_many), ErrorKind::InvalidRequest);
    // Failed requests leave no trace.
    CHECK(store.get(id).steps.empty());
  }
}

TEST_CASE("memory-only stores forget on restart") {
  const auto id = SessionStore{}.create().id;
  SessionStore fresh;
  CHECK_FAILS_WITH(fresh.get(id), ErrorKind::NotFound);
}

TEST_CASE("damaged logs are reported with their location") {
  TempDir d("sessions-bad");
  const std::string id = "sbroken";
  {
    std::ofstream out(d / (id + ".jsonl"));
    out << R"({"event":"create","session_id":"sbroken","timestamp":"2026-01-01T00:00:00.000Z"})" << '\n';
    out << "{not json" << '\n';
  }
  SessionStore store(d.path());
  try {
    store.get(id);
    FAIL("expected a persistence error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Persistence);
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  {
    std::ofstream out(d / "sorphan.jsonl");
    out << R"({"event":"close","timestamp":"2026-01-01T00:00:00.000Z"})" << '\n';
  }
  CHECK_FAILS_WITH(store.get("sorphan"), ErrorKind::Persistence);
}

TEST_CASE("concurrent refinement keeps per-session order") {
  TempDir d("sessions-mt");
  SessionStore store(d.path());
  const auto p = make_pipeline();
  const std::vector<std::string> ids{store.create().id, store.create().id, store.create().id};
  std::vector<std::thread> threads;
  for (int t = 0; t < 6; ++t) {
    threads.emplace_back([&, t] {
      for (int r = 0; r < 5; ++r) store.refine(ids[static_cast<std::size_t>(t) % ids.size()], p, with_text("a smiling woman", std::nullopt, static_cast<std::uint64_t>(t * 10 + r)));
    });
  }
  for (auto& th : threads) th.join();
  for (const auto& id : ids) {
    const auto s = store.get(id);
    REQUIRE(s.steps.size() == 10);
    for (std::size_t i = 0; i < s.steps.size(); ++i) CHECK(s.steps[i].index == i);
    CHECK(SessionStore::replay(d / (id + ".jsonl")) == s);
  }
}
