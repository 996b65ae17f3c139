#include "coviz/explain_render.hpp"

#include "coviz/summary_select.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace coviz
{
    namespace
    {
        std::string num(double v)
        {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.2f", v);
            std::string s = buf;
            if (s == "-0.00")
                s = "0.00";
            return s;
        }

        std::string escapeXml(std::string_view text)
        {
            std::string out;
            out.reserve(text.size());
            for (char c : text)
            {
                switch (c)
                {
                case '&':
                    out += "&amp;";
                    break;
                case '<':
                    out += "&lt;";
                    break;
                case '>':
                    out += "&gt;";
                    break;
                case '"':
                    out += "&quot;";
                    break;
                default:
                    out.push_back(c);
                }
            }
            return out;
        }

        FrameVehicle frameVehicle(const Viewport& vp, const Vehicle& v, double camera)
        {
            return FrameVehicle{vp.carBox(v, camera), v.lane, v.x};
        }

        Frame makeFrame(const Viewport& vp, int offset, const SimState& fact)
        {
            Frame f;
            f.offset = offset;
            f.step_index = fact.step_index;
            f.camera_x = fact.ego.x;
            f.ego = frameVehicle(vp, fact.ego, f.camera_x);
            f.others.reserve(fact.others.size());
            for (const Vehicle& v : fact.others)
            {
                f.others.push_back(frameVehicle(vp, v, f.camera_x));
            }
            f.fact_collided = fact.collided;
            return f;
        }

        void rect(std::string& out, std::string_view cls, const Box& b, std::string_view style, int lane)
        {
            out += "  <rect class=\"" + std::string(cls) + "\" data-lane=\"" + std::to_string(lane) + "\" x=\"" +
                   num(b.cx - b.w / 2.0) + "\" y=\"" + num(b.cy - b.h / 2.0) + "\" width=\"" + num(b.w) +
                   "\" height=\"" + num(b.h) + "\" " + std::string(style) + "/>\n";
        }
    }

    BarChart rdBarData(const AgentModel& model, const Observation& obs, Action fact, Action foil)
    {
        if (fact == foil)
            throw InvalidFoilError("bar chart needs distinct fact and foil actions");
        const DecomposedQ q = model.decomposedQ(obs);
        const ActionTotals totals = totalQ(q);
        BarChart chart;
        for (std::size_t c = 0; c < kNumComponents; ++c)
        {
            chart.labels[c] = std::string(kComponentLabels[c]);
            chart.fact_values[c] = q[c][ordinal(fact)];
            chart.foil_values[c] = q[c][ordinal(foil)];
        }
        chart.fact_total = totals[ordinal(fact)];
        chart.foil_total = totals[ordinal(foil)];
        chart.fact_action = fact;
        chart.foil_action = foil;
        return chart;
    }

    Viewport Viewport::forEnv(const EnvConfig& env)
    {
        Viewport vp;
        vp.lanes = env.lanes;
        vp.car_length = env.car_length;
        return vp;
    }

    double Viewport::pxX(double worldX, double cameraX) const noexcept
    {
        return width * ego_anchor + (worldX - cameraX) * px_per_meter;
    }

    double Viewport::pxY(int lane) const noexcept
    {
        return road_top + (static_cast<double>(lane) + 0.5) * lane_height;
    }

    double Viewport::worldX(double pxXValue, double cameraX) const noexcept
    {
        return (pxXValue - width * ego_anchor) / px_per_meter + cameraX;
    }

    int Viewport::laneAt(double pxYValue) const noexcept
    {
        return static_cast<int>(std::floor((pxYValue - road_top) / lane_height));
    }

    Box Viewport::carBox(const Vehicle& v, double cameraX) const noexcept
    {
        return Box{pxX(v.x, cameraX), pxY(v.lane), car_length * px_per_meter, lane_height * 0.6};
    }

    FrameSequence pairToFrames(const CFPair& pair, const EnvConfig& env)
    {
        FrameSequence seq;
        seq.viewport = Viewport::forEnv(env);
        const Viewport& vp = seq.viewport;

        seq.origin = makeFrame(vp, 0, pair.origin);
        seq.origin.foil = seq.origin.ego;

        std::optional<Vehicle> crashed;
        if (pair.foil_terminal == TerminalCause::Collision && !pair.foil.empty())
            crashed = pair.foil.back().ego;

        seq.frames.reserve(pair.fact.size());
        for (std::size_t j = 0; j < pair.fact.size(); ++j)
        {
            Frame f = makeFrame(vp, static_cast<int>(j) + 1, pair.fact[j]);
            if (j < pair.foil.size())
            {
                f.foil = frameVehicle(vp, pair.foil[j].ego, f.camera_x);
            }
            else
            {
                f.foil_absent = true;
            }
            if (crashed && j + 1 >= pair.foil.size())
            {
                const Box b = vp.carBox(*crashed, f.camera_x);
                f.crash_marker = Point{b.cx, b.cy};
            }
            seq.frames.push_back(std::move(f));
        }
        return seq;
    }

    std::string frameToSvg(const Frame& frame, const Viewport& vp)
    {
        const double w = vp.width;
        const double h = vp.height();
        std::string out;
        out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
        out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + num(w) + "\" height=\"" +
               num(h) + "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\">\n";
        out += "  <rect class=\"background\" x=\"0\" y=\"0\" width=\"" + num(w) + "\" height=\"" + num(h) +
               "\" fill=\"#dfe8d8\"/>\n";
        out += "  <rect class=\"road\" x=\"0\" y=\"" + num(vp.road_top) + "\" width=\"" + num(w) + "\" height=\"" +
               num(vp.lane_height * vp.lanes) + "\" fill=\"#5b5b5b\"/>\n";
        for (int lane = 1; lane < vp.lanes; ++lane)
        {
            const double y = vp.road_top + lane * vp.lane_height;
            out += "  <line class=\"lane-mark\" x1=\"0\" y1=\"" + num(y) + "\" x2=\"" + num(w) + "\" y2=\"" + num(y) +
                   "\" stroke=\"#f2f2f2\" stroke-width=\"1\" stroke-dasharray=\"12 10\"/>\n";
        }
        for (const FrameVehicle& v : frame.others)
        {
            rect(out, "vehicle other", v.box, "fill=\"#3b6fd8\"", v.lane);
        }
        rect(out, "vehicle ego", frame.ego.box, frame.fact_collided ? "fill=\"#1d6b32\"" : "fill=\"#2fa84f\"",
             frame.ego.lane);
        if (frame.foil)
        {
            rect(out, "vehicle foil", frame.foil->box, "fill=\"none\" stroke=\"#e02020\" stroke-width=\"2\"",
                 frame.foil->lane);
        }
        if (frame.crash_marker)
        {
            const Point& p = *frame.crash_marker;
            const double r = vp.lane_height * 0.35;
            out += "  <g class=\"crash\" stroke=\"#e02020\" stroke-width=\"3\">\n";
            out += "    <line x1=\"" + num(p.x - r) + "\" y1=\"" + num(p.y - r) + "\" x2=\"" + num(p.x + r) +
                   "\" y2=\"" + num(p.y + r) + "\"/>\n";
            out += "    <line x1=\"" + num(p.x - r) + "\" y1=\"" + num(p.y + r) + "\" x2=\"" + num(p.x + r) +
                   "\" y2=\"" + num(p.y - r) + "\"/>\n";
            out += "  </g>\n";
        }
        out += "  <text x=\"8\" y=\"16\" font-family=\"monospace\" font-size=\"12\" fill=\"#222222\">" +
               escapeXml("t+" + std::to_string(frame.offset) + "  step " + std::to_string(frame.step_index) +
                         (frame.foil_absent ? "  foil ended" : "")) +
               "</text>\n";
        out += "</svg>\n";
        return out;
    }

    BarGeometry barGeometry(const BarChart& chart) noexcept
    {
        BarGeometry g;
        double maxAbs = 0.0;
        for (std::size_t c = 0; c < kNumComponents; ++c)
        {
            maxAbs = std::max({maxAbs, std::abs(chart.fact_values[c]), std::abs(chart.foil_values[c])});
        }
        g.scale = maxAbs > 0.0 ? g.max_height / maxAbs : 0.0;
        return g;
    }

    std::string barChartToSvg(const BarChart& chart)
    {
        const BarGeometry g = barGeometry(chart);
        const double width = 60.0 + 90.0 * kNumComponents;
        const double height = g.baseline * 2.0;
        std::string out;
        out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
        out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + num(width) + "\" height=\"" +
               num(height) + "\" viewBox=\"0 0 " + num(width) + " " + num(height) + "\">\n";
        out += "  <line class=\"baseline\" x1=\"30\" y1=\"" + num(g.baseline) + "\" x2=\"" + num(width - 10.0) +
               "\" y2=\"" + num(g.baseline) + "\" stroke=\"#222222\" stroke-width=\"1\"/>\n";

        auto bar = [&](std::size_t c, std::string_view series, double value, double x, std::string_view fill) {
            const double hpx = std::abs(value) * g.scale;
            const double y = value >= 0.0 ? g.baseline - hpx : g.baseline;
            out += "  <rect class=\"bar " + std::string(series) + "\" data-component=\"" +
                   escapeXml(chart.labels[c]) + "\" data-series=\"" + std::string(series) + "\" data-value=\"" +
                   num(value) + "\" x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"26.00\" height=\"" + num(hpx) +
                   "\" fill=\"" + std::string(fill) + "\"/>\n";
        };
        for (std::size_t c = 0; c < kNumComponents; ++c)
        {
            const double x0 = 40.0 + 90.0 * static_cast<double>(c);
            bar(c, "fact", chart.fact_values[c], x0, "#2fa84f");
            bar(c, "foil", chart.foil_values[c], x0 + 30.0, "#e02020");
            out += "  <text x=\"" + num(x0 + 28.0) + "\" y=\"" + num(height - 8.0) +
                   "\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">" +
                   escapeXml(chart.labels[c]) + "</text>\n";
        }
        out += "  <text x=\"8\" y=\"16\" font-family=\"monospace\" font-size=\"12\">" +
               escapeXml("fact " + std::string(actionName(chart.fact_action)) + " (" + num(chart.fact_total) +
                         ")  foil " + std::string(actionName(chart.foil_action)) + " (" + num(chart.foil_total) +
                         ")") +
               "</text>\n";
        out += "</svg>\n";
        return out;
    }

    std::vector<std::filesystem::path> renderSVG(const FrameSequence& frames, const std::optional<BarChart>& chart,
                                                 const std::filesystem::path& dir)
    {
        std::filesystem::create_directories(dir);
        std::vector<std::filesystem::path> written;
        auto write = [&](const std::filesystem::path& path, const std::string& text) {
            std::ofstream out(path, std::ios::binary | std::ios::trunc);
            if (!out)
                throw std::runtime_error("cannot write " + path.string());
            out << text;
            if (!out)
                throw std::runtime_error("failed writing " + path.string());
            written.push_back(path);
        };
        auto frameName = [](int offset) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "frame_%02d.svg", offset);
            return std::string(buf);
        };
        write(dir / frameName(0), frameToSvg(frames.origin, frames.viewport));
        for (const Frame& f : frames.frames)
        {
            write(dir / frameName(f.offset), frameToSvg(f, frames.viewport));
        }
        if (chart)
            write(dir / "bars.svg", barChartToSvg(*chart));
        return written;
    }

    CordPayload buildCordPayload(const AgentModel& model, const CFPair& pair, std::optional<double> score,
                                 std::string scoreMethod)
    {
        if (pair.agent_id != model.id())
        {
            throw ConsistencyError("pair from agent '" + pair.agent_id + "' explained with model '" + model.id() +
                                   "'");
        }
        const HighwayEnv env(model.env());
        CordPayload payload;
        payload.agent_id = pair.agent_id;
        payload.trace_id = pair.trace_id;
        payload.origin_index = pair.origin_index;
        payload.k = pair.k();
        payload.fact_action = pair.fact_action;
        payload.foil_action = pair.foil_action;
        payload.cf_method = pair.cf_method.name();
        payload.score = score;
        payload.score_method = std::move(scoreMethod);
        payload.importance = pair.importance;
        payload.foil_terminal = pair.foil_terminal;
        payload.degenerate = pair.degenerate;
        payload.rejoins = foilRejoins(pair);
        payload.bars = rdBarData(model, env.observe(pair.origin), pair.fact_action, pair.foil_action);
        payload.frames = pairToFrames(pair, model.env());
        return payload;
    }

    json toJson(const BarChart& chart)
    {
        json components = json::array();
        for (std::size_t c = 0; c < kNumComponents; ++c)
        {
            components.push_back(
                json{{"label", chart.labels[c]}, {"fact", chart.fact_values[c]}, {"foil", chart.foil_values[c]}});
        }
        return json{{"components", std::move(components)},
                    {"fact_action", actionName(chart.fact_action)},
                    {"foil_action", actionName(chart.foil_action)},
                    {"fact_total", chart.fact_total},
                    {"foil_total", chart.foil_total}};
    }

    namespace
    {
        json vehicleJson(const FrameVehicle& v)
        {
            return json{{"cx", v.box.cx}, {"cy", v.box.cy}, {"w", v.box.w}, {"h", v.box.h},
                        {"lane", v.lane}, {"world_x", v.world_x}};
        }
    }

    json toJson(const Frame& frame)
    {
        json others = json::array();
        for (const auto& v : frame.others)
        {
            others.push_back(vehicleJson(v));
        }
        json out{{"offset", frame.offset},
                 {"step_index", frame.step_index},
                 {"camera_x", frame.camera_x},
                 {"ego", vehicleJson(frame.ego)},
                 {"others", std::move(others)},
                 {"foil", frame.foil ? vehicleJson(*frame.foil) : json(nullptr)},
                 {"foil_absent", frame.foil_absent},
                 {"fact_collided", frame.fact_collided}};
        out["crash_marker"] =
            frame.crash_marker ? json{{"x", frame.crash_marker->x}, {"y", frame.crash_marker->y}} : json(nullptr);
        return out;
    }

    json toJson(const FrameSequence& seq)
    {
        const Viewport& vp = seq.viewport;
        json frames = json::array();
        for (const auto& f : seq.frames)
        {
            frames.push_back(toJson(f));
        }
        return json{{"viewport",
                     {{"lanes", vp.lanes},
                      {"px_per_meter", vp.px_per_meter},
                      {"lane_height", vp.lane_height},
                      {"road_top", vp.road_top},
                      {"width", vp.width},
                      {"height", vp.height()},
                      {"ego_anchor", vp.ego_anchor}}},
                    {"origin", toJson(seq.origin)},
                    {"frames", std::move(frames)}};
    }

    json toJson(const CordPayload& p)
    {
        auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
        return json{{"agent_id", p.agent_id},
                    {"trace_id", p.trace_id},
                    {"origin_index", p.origin_index},
                    {"k", p.k},
                    {"fact_action", actionName(p.fact_action)},
                    {"foil_action", actionName(p.foil_action)},
                    {"cf_method", p.cf_method},
                    {"score", opt(p.score)},
                    {"score_method", p.score_method},
                    {"importance",
                     {{"last_state", opt(p.importance.last_state)},
                      {"qdiff_second_best", opt(p.importance.qdiff_second_best)},
                      {"qdiff_worst", opt(p.importance.qdiff_worst)}}},
                    {"foil_terminal", p.foil_terminal ? json(terminalCauseName(*p.foil_terminal)) : json(nullptr)},
                    {"degenerate", p.degenerate},
                    {"rejoins", p.rejoins},
                    {"bars", toJson(p.bars)},
                    {"frames", toJson(p.frames)}};
    }
}
