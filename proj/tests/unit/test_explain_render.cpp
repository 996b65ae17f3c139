#include "fixtures.hpp"

#include <doctest.h>

#include <cstdlib>
#include <regex>

using namespace coviz;
using coviz::test::handState;

namespace
{
    // Pair whose foil follows the fact exactly.
    CFPair identityPair()
    {
        CFPair p;
        p.trace_id = "agent1-t0000";
        p.agent_id = "agent1";
        p.origin_index = 4;
        p.origin = handState({1, 100.0, 1}, {{0, 130.0, 0}, {2, 90.0, 2}, {3, 150.0, 1}}, 4);
        const HighwayEnv env(EnvConfig{});
        SimState s = p.origin;
        for (int j = 0; j < 7; ++j)
        {
            s = env.step(s, Action::Idle).next;
            p.fact.push_back(s);
        }
        p.foil = p.fact;
        p.fact_action = Action::Idle;
        p.foil_action = Action::Idle;
        return p;
    }

    // Minimal XML well-formedness check: balanced tags, quoted attributes, one root.
    bool wellFormedXml(const std::string& text)
    {
        std::vector<std::string> stack;
        std::size_t pos = 0;
        int roots = 0;
        static const std::regex attrs(R"(^(\s+[A-Za-z_:][-A-Za-z0-9_:.]*="[^"<&]*")*\s*/?$)");
        while ((pos = text.find('<', pos)) != std::string::npos)
        {
            const std::size_t end = text.find('>', pos);
            if (end == std::string::npos)
                return false;
            std::string tag = text.substr(pos + 1, end - pos - 1);
            pos = end + 1;
            if (tag.starts_with("?"))
                continue;
            if (tag.starts_with("/"))
            {
                if (stack.empty() || stack.back() != tag.substr(1))
                    return false;
                stack.pop_back();
                continue;
            }
            const std::size_t nameEnd = std::min(tag.find_first_of(" \t\n/"), tag.size());
            const std::string name = tag.substr(0, nameEnd);
            if (name.empty() || !std::regex_match(tag.substr(nameEnd), attrs))
                return false;
            if (stack.empty())
                ++roots;
            if (!tag.ends_with("/"))
                stack.push_back(name);
        }
        return stack.empty() && roots == 1;
    }

    struct BarRect
    {
        std::string series;
        double value;
        double y;
        double height;
    };

    std::vector<BarRect> parseBars(const std::string& svg)
    {
        static const std::regex re(
            R"re(<rect class="bar [a-z]+" data-component="[^"]*" data-series="([a-z]+)" data-value="([-0-9.]+)" x="[-0-9.]+" y="([-0-9.]+)" width="[-0-9.]+" height="([-0-9.]+)")re");
        std::vector<BarRect> out;
        for (auto it = std::sregex_iterator(svg.begin(), svg.end(), re); it != std::sregex_iterator(); ++it)
        {
            const auto& m = *it;
            out.push_back({m[1], std::stod(m[2]), std::stod(m[3]), std::stod(m[4])});
        }
        return out;
    }

    void checkGolden(const std::string& name, const std::string& text)
    {
        const auto golden = test::goldenDir() / name;
        if (std::getenv("COVIZ_UPDATE_GOLDEN"))
            writeTextFile(golden, text);
        REQUIRE(std::filesystem::exists(golden));
        CHECK(readTextFile(golden) == text);
    }
}

TEST_SUITE("explain_render")
{
    TEST_CASE("fresh model gives zero bars")
    {
        const AgentModel model("m", "custom", EnvConfig{}, Hyperparams{});
        const BarChart chart = rdBarData(model, Observation{}, Action::Idle, Action::Faster);
        for (std::size_t c = 0; c < kNumComponents; ++c)
        {
            CHECK(chart.labels[c] == kComponentLabels[c]);
            CHECK(chart.fact_values[c] == 0.0);
            CHECK(chart.foil_values[c] == 0.0);
        }
        CHECK(chart.fact_total == 0.0);
        CHECK_THROWS_AS(rdBarData(model, Observation{}, Action::Idle, Action::Idle), InvalidFoilError);
    }

    TEST_CASE("bar values are the stored Q and sum to the totals")
    {
        const AgentModel& model = test::studyAgent("agent3");
        for (const Observation& obs : test::allObservations())
        {
            const DecomposedQ q = model.decomposedQ(obs);
            const ActionTotals totals = totalQ(q);
            const Action fact = greedyAction(q);
            const Action foil = rankedActions(q)[1];
            const BarChart chart = rdBarData(model, obs, fact, foil);
            double factSum = 0.0;
            double foilSum = 0.0;
            for (std::size_t c = 0; c < kNumComponents; ++c)
            {
                CHECK(chart.fact_values[c] == q[c][ordinal(fact)]);
                CHECK(chart.foil_values[c] == q[c][ordinal(foil)]);
                factSum += chart.fact_values[c];
                foilSum += chart.foil_values[c];
            }
            CHECK(std::abs(factSum - totals[ordinal(fact)]) <= 1e-12);
            CHECK(std::abs(foilSum - totals[ordinal(foil)]) <= 1e-12);
            CHECK(chart.fact_total == totals[ordinal(fact)]);
        }
    }

    TEST_CASE("speed-seeking agent values Faster over Slower on a clear road")
    {
        const AgentModel& model = test::studyAgent("agent2");
        const std::size_t hs = 1;
        REQUIRE(kComponentLabels[hs] == "HS");
        int visited = 0;
        for (int lane = 0; lane < 4; ++lane)
        {
            for (int speed = 0; speed < 2; ++speed)
            {
                Observation obs;
                obs.ego_lane = lane;
                obs.ego_speed_level = speed;
                obs.at_right_most = lane == 3;
                if (!model.table().contains(obs.key()))
                    continue;
                ++visited;
                const BarChart chart = rdBarData(model, obs, Action::Faster, Action::Slower);
                CAPTURE(obs.label());
                CHECK(chart.fact_values[hs] >= chart.foil_values[hs]);
            }
        }
        CHECK(visited > 0);
    }

    TEST_CASE("identity pair: foil covers the ego in every frame")
    {
        const CFPair pair = identityPair();
        const FrameSequence seq = pairToFrames(pair, EnvConfig{});
        CHECK(seq.frames.size() == 7);
        CHECK(seq.origin.offset == 0);
        REQUIRE(seq.origin.foil.has_value());
        CHECK(seq.origin.foil->box == seq.origin.ego.box);
        for (std::size_t j = 0; j < seq.frames.size(); ++j)
        {
            const Frame& f = seq.frames[j];
            CHECK(f.offset == static_cast<int>(j) + 1);
            CHECK(f.step_index == pair.fact[j].step_index);
            REQUIRE(f.foil.has_value());
            CHECK(f.foil->box == f.ego.box);
            CHECK_FALSE(f.foil_absent);
            CHECK_FALSE(f.crash_marker.has_value());
        }
    }

    TEST_CASE("foil colliding at its third step")
    {
        CFPair pair = identityPair();
        pair.foil.resize(3);
        pair.foil[2].collided = true;
        pair.foil_terminal = TerminalCause::Collision;
        const FrameSequence seq = pairToFrames(pair, EnvConfig{});
        REQUIRE(seq.frames.size() == 7);
        for (std::size_t j = 0; j < 7; ++j)
        {
            CAPTURE(j);
            CHECK(seq.frames[j].foil_absent == (j >= 3));
            CHECK(seq.frames[j].foil.has_value() == (j < 3));
            CHECK(seq.frames[j].crash_marker.has_value() == (j >= 2));
        }
        const Frame& last = seq.frames.back();
        const Box crashed = seq.viewport.carBox(pair.foil.back().ego, last.camera_x);
        CHECK(last.crash_marker->x == crashed.cx);
        CHECK(last.crash_marker->y == crashed.cy);
    }

    TEST_CASE("frame coordinates invert to lanes and positions")
    {
        const auto& run = test::smallRun();
        const EnvConfig env = test::studyAgent("agent1").env();
        for (std::size_t p = 0; p < run.pairs.size(); p += 7)
        {
            const CFPair& pair = run.pairs[p];
            const FrameSequence seq = pairToFrames(pair, env);
            const Viewport& vp = seq.viewport;
            CHECK(seq.origin.foil->box == seq.origin.ego.box);
            for (std::size_t j = 0; j < seq.frames.size(); ++j)
            {
                const Frame& f = seq.frames[j];
                const SimState& s = pair.fact[j];
                CHECK(vp.laneAt(f.ego.box.cy) == s.ego.lane);
                CHECK(std::abs(vp.worldX(f.ego.box.cx, f.camera_x) - s.ego.x) < 1e-9);
                REQUIRE(f.others.size() == s.others.size());
                for (std::size_t o = 0; o < s.others.size(); ++o)
                {
                    CHECK(vp.laneAt(f.others[o].box.cy) == s.others[o].lane);
                    CHECK(std::abs(vp.worldX(f.others[o].box.cx, f.camera_x) - s.others[o].x) < 1e-9);
                }
                if (f.foil)
                {
                    CHECK(vp.laneAt(f.foil->box.cy) == pair.foil[j].ego.lane);
                    CHECK(std::abs(vp.worldX(f.foil->box.cx, f.camera_x) - pair.foil[j].ego.x) < 1e-9);
                }
            }
        }
    }

    TEST_CASE("SVG output is well-formed")
    {
        CHECK(wellFormedXml("<a><b x=\"1\"/></a>"));
        CHECK_FALSE(wellFormedXml("<a><b></a>"));
        CHECK_FALSE(wellFormedXml("<a x=1></a>"));

        const auto& run = test::smallRun();
        const AgentModel& model = test::studyAgent("agent1");
        for (std::size_t p = 0; p < run.pairs.size(); p += 11)
        {
            const CordPayload payload = buildCordPayload(model, run.pairs[p]);
            CHECK(wellFormedXml(frameToSvg(payload.frames.origin, payload.frames.viewport)));
            for (const Frame& f : payload.frames.frames)
                CHECK(wellFormedXml(frameToSvg(f, payload.frames.viewport)));
            CHECK(wellFormedXml(barChartToSvg(payload.bars)));
        }
    }

    TEST_CASE("bar heights are proportional to the values")
    {
        BarChart chart;
        chart.labels = {"CL", "HS", "RML", "COL"};
        chart.fact_values = {2.5, 8.0, -1.25, 0.0};
        chart.foil_values = {1.0, 4.0, 3.3, -2.0};
        const std::string svg = barChartToSvg(chart);
        const auto bars = parseBars(svg);
        REQUIRE(bars.size() == 8);
        const double baseline = 130.0;
        const double pxPerUnit = 100.0 / 8.0;
        for (std::size_t c = 0; c < 4; ++c)
        {
            for (const auto& [series, expected] :
                 {std::pair{"fact", chart.fact_values[c]}, std::pair{"foil", chart.foil_values[c]}})
            {
                const BarRect& b = bars[2 * c + (std::string(series) == "fact" ? 0 : 1)];
                CHECK(b.series == series);
                CHECK(std::abs(b.value - expected) < 0.005);
                CHECK(std::abs(b.height - std::abs(expected) * pxPerUnit) <= 0.5);
                if (expected >= 0)
                    CHECK(std::abs(b.y + b.height - baseline) <= 0.5);
                else
                    CHECK(std::abs(b.y - baseline) <= 0.5);
            }
        }
    }

    TEST_CASE("rendering is byte-deterministic and matches the golden files")
    {
        const CFPair pair = identityPair();
        const FrameSequence seq = pairToFrames(pair, EnvConfig{});
        BarChart chart;
        chart.labels = {"CL", "HS", "RML", "COL"};
        chart.fact_values = {0.5, 6.0, 2.0, -0.75};
        chart.foil_values = {1.5, 3.0, 2.0, -2.5};
        chart.fact_total = 7.75;
        chart.foil_total = 4.0;
        chart.fact_action = Action::Idle;
        chart.foil_action = Action::LaneRight;

        test::TempDir a("render-a");
        test::TempDir b("render-b");
        const auto filesA = renderSVG(seq, chart, a.path());
        const auto filesB = renderSVG(seq, chart, b.path());
        REQUIRE(filesA.size() == 9);
        CHECK(filesA.front().filename() == "frame_00.svg");
        CHECK(filesA[7].filename() == "frame_07.svg");
        CHECK(filesA.back().filename() == "bars.svg");
        for (std::size_t i = 0; i < filesA.size(); ++i)
            CHECK(readTextFile(filesA[i]) == readTextFile(filesB[i]));

        checkGolden("identity_frame_03.svg", readTextFile(a.path() / "frame_03.svg"));
        checkGolden("bars.svg", readTextFile(a.path() / "bars.svg"));
    }

    TEST_CASE("CORD payload")
    {
        const auto& run = test::smallRun();
        const AgentModel& model = test::studyAgent("agent1");
        const HighwayEnv env(model.env());
        const CFPair& pair = run.pairs.front();
        const CordPayload payload = buildCordPayload(model, pair, 1.5, "qdiff-second");
        CHECK(payload.bars.fact_action == pair.fact_action);
        CHECK(payload.bars.foil_action == pair.foil_action);
        CHECK(payload.frames.frames.size() <= static_cast<std::size_t>(pair.k()));
        CHECK(payload.score == 1.5);
        CHECK(payload.score_method == "qdiff-second");
        CHECK(payload.frames.origin.step_index == pair.origin.step_index);
        const BarChart direct = rdBarData(model, env.observe(pair.origin), pair.fact_action, pair.foil_action);
        CHECK(payload.bars.fact_values == direct.fact_values);

        const json j = toJson(payload);
        CHECK(j["fact_action"] == actionName(pair.fact_action));
        CHECK(j["frames"]["frames"].size() == payload.frames.frames.size());
        CHECK(j["bars"]["components"].size() == kNumComponents);

        CHECK_THROWS_AS(buildCordPayload(test::studyAgent("agent2"), pair), ConsistencyError);
    }
}
