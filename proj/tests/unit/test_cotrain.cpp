#include <gtest/gtest.h>

#include "support.hpp"
#include "synthetic.hpp"
#include "vidcurate/cotrain.hpp"

using namespace vidcurate;
using testing_support::TempDir;

namespace {

synthetic::TwoViewParams small() {
    synthetic::TwoViewParams p;
    p.n_seed = 30;
    p.n_unlabeled = 200;
    p.n_test = 100;
    p.shift = 0.6;
    return p;
}

CoTrainConfig config(std::uint64_t seed = 1) {
    CoTrainConfig c;
    c.k_pos = c.k_neg = 20;
    c.tau = 0.75;
    c.max_rounds = 8;
    c.seed = seed;
    c.forest.n_trees = 20;
    c.forest.max_depth = 6;
    return c;
}

/// Answers nothing, so the first conflict interrupts the run.
class SilentResolver final : public ReviewResolver {
public:
    std::optional<Binary> resolve(const ReviewItem&, const CoTrainState&) override { return std::nullopt; }
    std::string name() const override { return "silent"; }
};

std::string dump(const CoTrainState& s) { return to_json(s).dump(); }

ReviewItem pending(const std::string& id, Dimension d = Dimension::med) {
    ReviewItem r;
    r.video_id = id;
    r.target = d;
    r.created_round = 1;
    return r;
}

}  // namespace

TEST(CoTrain, ConfigValidation) {
    auto c = config();
    c.tau = 0.5;
    EXPECT_THROW(validate(c), UsageError);
    c = config();
    c.k_pos = 0;
    EXPECT_THROW(validate(c), UsageError);
    c = config();
    c.patience = 0;
    EXPECT_THROW(validate(c), UsageError);
    EXPECT_EQ(cotrain_config_from_json(to_json(config(9))).seed, 9u);
}

TEST(CoTrain, InitRejectsBadSeeds) {
    const auto d = synthetic::two_view(1, small());
    std::vector<std::pair<ViewPair, Binary>> one_class;
    for (const auto& [v, l] : d.seed)
        if (l == Binary::high) one_class.emplace_back(v, l);
    try {
        init_state(one_class, d.unlabeled, config());
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("degenerate labels"), std::string::npos);
    }
    auto dup = d.unlabeled;
    dup.push_back(d.seed.front().first);
    EXPECT_THROW(init_state(d.seed, dup, config()), DataError);
}

TEST(CoTrain, RoundsRouteExactlyByPoolMembership) {
    const auto d = synthetic::two_view(2, small());
    auto s = init_state(d.seed, d.unlabeled, config());
    synthetic::TruthResolver resolver(d.truth);
    std::size_t steps = 0;
    RunOptions opt;
    opt.on_step = [&](const CoTrainState& st) {
        ++steps;
        EXPECT_TRUE(partition_holds(st)) << "round " << st.round;
    };
    const auto res = run(s, resolver, opt);
    ASSERT_FALSE(res.rounds.empty());
    std::size_t autos = 0;
    for (const auto& r : res.rounds) {
        EXPECT_EQ(synthetic::audit_round(r, s.config), std::vector<std::string>{}) << "round " << r.round;
        for (const auto& e : r.entries) {
            if (e.disposition == Disposition::auto_positive || e.disposition == Disposition::auto_negative) {
                ++autos;
                const auto& item = s.labeled.at(e.video_id);
                EXPECT_EQ(item.source, LabelSource::auto_cotrain);
                EXPECT_EQ(item.round, r.round);
                EXPECT_EQ(item.label == Binary::high, e.disposition == Disposition::auto_positive);
            }
            if (e.disposition == Disposition::review) {
                EXPECT_EQ(s.labeled.at(e.video_id).source, LabelSource::human);
            }
        }
    }
    EXPECT_GT(autos, 0u);
    EXPECT_GT(steps, res.rounds.size());
    // leftovers are discarded, never labeled
    for (const auto& id : res.discarded) {
        EXPECT_FALSE(s.labeled.contains(id));
        EXPECT_TRUE(s.discarded.contains(id));
    }
    EXPECT_EQ(res.labels.size(), s.labeled.size());
    EXPECT_TRUE(partition_holds(s));
}

TEST(CoTrain, SingleViewConfidenceStaysUnlabeled) {
    const auto d = synthetic::two_view(3, small());
    auto s = init_state(d.seed, d.unlabeled, config());
    const auto& pools = select_pools(s);
    std::set<std::string> single;
    for (const auto& [id, _] : pools.proba) {
        const bool pos = pools.p1.contains(id) || pools.p2.contains(id);
        const bool neg = pools.n1.contains(id) || pools.n2.contains(id);
        const bool both_pos = pools.p1.contains(id) && pools.p2.contains(id);
        const bool both_neg = pools.n1.contains(id) && pools.n2.contains(id);
        if ((pos != neg) && !both_pos && !both_neg) single.insert(id);
    }
    ASSERT_FALSE(single.empty());
    commit_round(s);
    for (const auto& id : single) EXPECT_TRUE(s.unlabeled.contains(id)) << id;
}

TEST(CoTrain, DeterministicUnderSeed) {
    const auto d = synthetic::two_view(4, small());
    synthetic::TruthResolver r1(d.truth), r2(d.truth);
    auto a = init_state(d.seed, d.unlabeled, config(5));
    auto b = init_state(d.seed, d.unlabeled, config(5));
    const auto ra = run(a, r1);
    const auto rb = run(b, r2);
    EXPECT_EQ(dump(a), dump(b));
    EXPECT_EQ(ra.labels, rb.labels);
}

TEST(CoTrain, InterruptedRunResumesToSameResult) {
    const auto d = synthetic::two_view(6, small());
    synthetic::TruthResolver truth(d.truth);
    auto whole = init_state(d.seed, d.unlabeled, config());
    const auto full = run(whole, truth);
    ASSERT_GT(truth.calls, 0) << "scenario needs at least one conflict";

    TempDir dir;
    auto part = init_state(d.seed, d.unlabeled, config());
    SilentResolver silent;
    RunOptions opt;
    opt.checkpoint_dir = dir.path();
    std::filesystem::path cp;
    try {
        run(part, silent, opt);
        FAIL() << "expected an interruption";
    } catch (const ResumableStop& stop) {
        cp = stop.checkpoint;
    }
    EXPECT_TRUE(std::filesystem::exists(checkpoint_path(dir.path(), Dimension::med, "round0")));
    ASSERT_TRUE(std::filesystem::exists(cp));
    auto resumed = load_checkpoint(cp);
    EXPECT_EQ(dump(resumed), dump(part));
    synthetic::TruthResolver truth2(d.truth);
    const auto rest = run(resumed, truth2);
    EXPECT_EQ(rest.labels, full.labels);
    EXPECT_EQ(dump(resumed), dump(whole));
}

TEST(CoTrain, ReviewResolution) {
    const auto d = synthetic::two_view(7, small());
    auto s = init_state(d.seed, d.unlabeled, config());
    const std::string id = *s.unlabeled.begin();
    s.unlabeled.erase(id);
    s.review_queue.push_back(pending(id));
    EXPECT_TRUE(partition_holds(s));
    EXPECT_THROW(resolve_review(s, id, Binary::high, ""), UsageError);
    resolve_review(s, id, Binary::high, "alice");
    EXPECT_EQ(s.review_queue.back().revision, 2u);
    EXPECT_EQ(s.labeled.at(id).label, Binary::high);
    resolve_review(s, id, Binary::high, "bob");  // same answer again: no-op
    EXPECT_EQ(s.review_queue.back().revision, 2u);
    EXPECT_EQ(*s.review_queue.back().resolver, "alice");
    EXPECT_THROW(resolve_review(s, id, Binary::low, "bob"), StateError);
    EXPECT_THROW(resolve_review(s, "nope", Binary::low, "bob"), DataError);
    EXPECT_TRUE(partition_holds(s));
}

TEST(CoTrain, StoppingRules) {
    CoTrainState s;
    s.config = config();
    s.config.patience = 2;
    s.config.epsilon = 0.01;
    s.unlabeled = {"x"};
    auto report = [](double f1) {
        EvalReport r;
        r.macro_f1 = f1;
        return r;
    };
    s.history = {report(0.5), report(0.6), report(0.605)};
    EXPECT_FALSE(should_stop(s).stop);  // only one flat step so far
    s.history.push_back(report(0.609));
    auto d = should_stop(s);
    ASSERT_TRUE(d.stop);
    EXPECT_EQ(d.reasons, std::vector<StopReason>{StopReason::plateau});

    s.history = {report(0.5)};
    s.round = s.config.max_rounds;
    EXPECT_EQ(should_stop(s).reasons, std::vector<StopReason>{StopReason::max_rounds});
    s.round = 0;
    s.unlabeled.clear();
    EXPECT_EQ(should_stop(s).reasons, std::vector<StopReason>{StopReason::depleted});
    s.review_queue.push_back(pending("y"));
    EXPECT_FALSE(should_stop(s).stop);  // a pending conflict keeps the run alive
}

TEST(CoTrain, ZeroRoundsDiscardsEverything) {
    const auto d = synthetic::two_view(8, small());
    auto c = config();
    c.max_rounds = 0;
    auto s = init_state(d.seed, d.unlabeled, c);
    synthetic::TruthResolver r(d.truth);
    const auto res = run(s, r);
    EXPECT_TRUE(res.rounds.empty());
    EXPECT_EQ(res.discarded.size(), d.unlabeled.size());
    EXPECT_EQ(res.labels.size(), d.seed.size());
}

TEST(CoTrain, CheckpointRejectsCorruption) {
    TempDir dir;
    testing_support::spit(dir / "bad.json", "{\"format\": \"something-else\", \"version\": 1}");
    EXPECT_THROW(load_checkpoint(dir / "bad.json"), DataError);
    testing_support::spit(dir / "trunc.json", "{\"format\": ");
    EXPECT_THROW(load_checkpoint(dir / "trunc.json"), DataError);

    const auto d = synthetic::two_view(9, small());
    auto s = init_state(d.seed, d.unlabeled, config());
    auto j = to_json(s);
    j["unlabeled"].push_back(d.seed.front().first.video_id);  // now both labeled and unlabeled
    EXPECT_THROW(cotrain_state_from_json(j), DataError);
}

TEST(CoTrain, TranscriptResolverFile) {
    TempDir dir;
    testing_support::spit(dir / "r.csv", "video_id,dimension,label\nv1,MED,high\n\nv1,UND,low\n");
    auto r = TranscriptResolver::load(dir / "r.csv");
    CoTrainState s;
    EXPECT_EQ(r.resolve(pending("v1"), s), Binary::high);
    EXPECT_EQ(r.resolve(pending("v1", Dimension::und), s), Binary::low);
    EXPECT_EQ(r.resolve(pending("v2"), s), std::nullopt);
    testing_support::spit(dir / "bad.csv", "v1,MED,maybe\n");
    EXPECT_THROW(TranscriptResolver::load(dir / "bad.csv"), UsageError);
}
