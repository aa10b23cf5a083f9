#include "doctest.h"

#include "primes/round_store.hpp"
#include "primes/server.hpp"

#include "../support/fixtures.hpp"

#include <httplib.h>

using namespace primes;
using namespace primes::testing;

namespace {

const LabelSchema& kind_schema() {
    static const LabelSchema schema(std::vector<Task>{{"kind", {"bugfix", "feature"}}});
    return schema;
}

struct StoreFixture {
    TempDir dir;
    std::vector<DataItem> pool;
    std::vector<std::string> sample;

    StoreFixture() {
        for (int i = 0; i < 6; ++i) {
            pool.emplace_back(SourceLocator{"repo", "c" + std::to_string(i), std::nullopt},
                              FieldMap{{"title", fixture_title(i)}});
        }
        pilot::RoundSetup setup;
        setup.prompt_version_id = std::string(64, 'a');
        setup.schema = kind_schema();
        setup.pool = pool;
        for (int i = 0; i < 4; ++i) {
            sample.push_back(pool[static_cast<std::size_t>(i)].id());
        }
        std::sort(sample.begin(), sample.end());
        setup.sample_item_ids = sample;
        setup.threshold = 0.5;
        setup.min_n = 2;
        pilot::RoundStore::initialize(dir.path(), setup);
    }

    std::string gold(const std::string& id) const {
        for (const auto& item : pool) {
            if (item.id() == id) {
                return fixture_label(*item.field("title"));
            }
        }
        return {};
    }

    std::string outside() const {
        for (const auto& item : pool) {
            if (!std::binary_search(sample.begin(), sample.end(), item.id())) {
                return item.id();
            }
        }
        return {};
    }

    Json model_body(bool agree) const {
        Json anns = Json::array();
        for (const auto& id : sample) {
            auto label = gold(id);
            if (!agree) {
                label = label == "bugfix" ? "feature" : "bugfix";
            }
            anns.push_back({{"item_id", id}, {"labels", {{"kind", label}}}, {"rationale", "title"}});
        }
        return {{"annotations", anns}};
    }
};

int api_status(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const pilot::ApiError& e) {
        return e.status();
    }
    return 200;
}

} // namespace

TEST_CASE("round store: labels persist and replays are idempotent") {
    StoreFixture f;
    CHECK_THROWS_AS(pilot::RoundStore::initialize(f.dir.path(), pilot::RoundSetup{}), ConfigError);
    {
        pilot::RoundStore store(f.dir.path());
        CHECK(store.round_info().at("progress").at("total") == 4);
        CHECK(store.list_items("pending").at("items").size() == 4);
        const auto id = f.sample[0];
        const auto first = store.submit(id, {{"task", "kind"}, {"label", "bugfix"}});
        CHECK(first.at("changed") == true);
        CHECK(store.submit(id, {{"task", "kind"}, {"label", "bugfix"}}).at("changed") == false);
        CHECK(store.submit(id, {{"labels", {{"kind", "feature"}}}, {"round", 1}}).at("changed") == true);
        CHECK(store.item(id).at("labels").at("kind") == "feature");
        CHECK(store.item(id).dump().find("rationale") == std::string::npos);
    }
    pilot::RoundStore reopened(f.dir.path());
    CHECK(reopened.item(f.sample[0]).at("labels").at("kind") == "feature");
    CHECK(reopened.list_items("labeled").at("items").size() == 1);
    CHECK(reopened.list_items("pending").at("items").size() == 3);
}

TEST_CASE("round store: request errors carry status codes") {
    StoreFixture f;
    pilot::RoundStore store(f.dir.path());
    const auto id = f.sample[0];
    CHECK(api_status([&] { store.item("0000"); }) == 404);
    CHECK(api_status([&] { store.item(f.outside()); }) == 404);
    CHECK(api_status([&] { store.submit(f.outside(), {{"task", "kind"}, {"label", "bugfix"}}); }) == 404);
    CHECK(api_status([&] { store.submit(id, {{"task", "kind"}, {"label", "refactor"}}); }) == 422);
    CHECK(api_status([&] { store.submit(id, {{"task", "area"}, {"label", "ui"}}); }) == 422);
    CHECK(api_status([&] { store.submit(id, {{"nonsense", 1}}); }) == 400);
    CHECK(api_status([&] { store.submit(id, {{"task", "kind"}, {"label", "bugfix"}, {"round", 2}}); }) == 409);
    CHECK(api_status([&] { store.list_items("done"); }) == 422);
    CHECK(api_status([&] { store.advance({{"prompt_version_id", "v2"}}); }) == 409);
    CHECK(api_status([&] { store.advance(Json::object()); }) == 400);
    CHECK(api_status([&] { store.set_model_annotations({{"annotations", {{{"item_id", f.outside()}}}}}); }) == 422);
}

TEST_CASE("round store: agreement, gate and round advance") {
    StoreFixture f;
    pilot::RoundStore store(f.dir.path());
    CHECK(store.agreement().at("status") == "incomplete");
    for (const auto& id : f.sample) {
        store.submit(id, {{"task", "kind"}, {"label", f.gold(id)}});
    }
    CHECK(store.agreement().at("status") == "awaiting_model");
    CHECK(api_status([&] { store.advance({{"prompt_version_id", "v2"}}); }) == 409);

    store.set_model_annotations(f.model_body(false));
    const auto refine = store.agreement();
    CHECK(refine.at("status") == "computed");
    CHECK(refine.at("gate").at("outcome") == "refine");
    CHECK(store.disagreements().at("rows").size() == 4);
    CHECK(api_status([&] { store.advance({{"prompt_version_id", "v2"}}); }) == 422);

    const auto advanced = store.advance({{"prompt_version_id", "v2"}, {"notes", "clarify the task"}});
    CHECK(advanced.at("round_number") == 2);
    CHECK(store.round_info().at("fresh_sample") == false);
    CHECK(store.round_info().at("progress").at("labeled") == 0);
    CHECK(store.history().at("rounds").size() == 1);
    CHECK(store.history().at("rounds").at(0).at("notes") == "clarify the task");
    CHECK(api_status([&] { store.submit(f.sample[0], {{"task", "kind"}, {"label", "bugfix"}, {"round", 1}}); }) ==
          409);

    for (const auto& id : f.sample) {
        store.submit(id, {{"task", "kind"}, {"label", f.gold(id)}});
    }
    store.set_model_annotations(f.model_body(true));
    CHECK(store.agreement().at("gate").at("outcome") == "pass");
    const auto third = store.advance({{"prompt_version_id", "v3"}, {"sample_size", 3}, {"seed", 1}});
    CHECK(third.at("round_number") == 3);
    CHECK(store.round_info().at("progress").at("total") == 3);
    CHECK(store.round_info().at("fresh_sample") == true);
}

TEST_CASE("http api: every endpoint over loopback") {
    StoreFixture f;
    pilot::RoundStore store(f.dir.path());
    server::ApiServer api(store, {"127.0.0.1", 0});
    const int port = api.start();
    REQUIRE(port > 0);
    httplib::Client cli("127.0.0.1", port);

    auto get = [&](const std::string& path) {
        auto r = cli.Get(path);
        REQUIRE(r);
        return std::make_pair(r->status, Json::parse(r->body));
    };
    auto post = [&](const std::string& path, const std::string& body) {
        auto r = cli.Post(path, body, "application/json");
        REQUIRE(r);
        return std::make_pair(r->status, Json::parse(r->body));
    };

    auto [s, round] = get("/v1/round");
    CHECK(s == 200);
    CHECK(round.at("round_number") == 1);
    CHECK(get("/v1/items").second.at("items").size() == 4);
    CHECK(get("/v1/items?status=pending").second.at("items").size() == 4);
    CHECK(get("/v1/items/" + f.sample[0]).second.at("fields").at("title").is_string());

    for (const auto& id : f.sample) {
        const auto [st, body] = post("/v1/items/" + id + "/labels",
                                     Json{{"task", "kind"}, {"label", f.gold(id)}}.dump());
        CHECK(st == 200);
        CHECK(body.at("changed") == true);
    }
    CHECK(get("/v1/agreement").second.at("status") == "awaiting_model");
    CHECK(post("/v1/round/model-annotations", f.model_body(true).dump()).first == 200);
    const auto agreement = get("/v1/agreement").second;
    CHECK(agreement.at("tasks").at(0).at("kappa") == 1.0);
    CHECK(get("/v1/disagreements").second.at("rows").empty());
    CHECK(post("/v1/rounds/advance", R"({"prompt_version_id": "v2"})").second.at("round_number") == 2);
    CHECK(get("/v1/rounds").second.at("rounds").size() == 1);

    // errors are JSON with status, reason and message
    auto [bad_status, bad] = post("/v1/items/" + f.sample[0] + "/labels", "{not json");
    CHECK(bad_status == 400);
    CHECK(bad.at("error").at("reason") == "bad_json");
    auto [illegal_status, illegal] =
        post("/v1/items/" + f.sample[0] + "/labels", R"({"task": "kind", "label": "refactor"})");
    CHECK(illegal_status == 422);
    CHECK(illegal.at("error").at("status") == 422);
    CHECK(illegal.at("error").at("reason") == "illegal_category");
    CHECK(get("/v1/items/" + f.outside()).first == 404);
    CHECK(get("/v1/items?status=done").first == 422);
    auto [missing_status, missing] = get("/v1/nowhere");
    CHECK(missing_status == 404);
    CHECK(missing.at("error").at("reason") == "not_found");

    auto options = cli.Options("/v1/round");
    REQUIRE(options);
    CHECK(options->status == 204);
    CHECK(options->get_header_value("Access-Control-Allow-Origin") == "*");
    api.stop();
}
