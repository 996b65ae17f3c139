#pragma once

#include "coviz/coviz_engine.hpp"
#include "coviz/serialize.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace coviz
{
    struct BarChart
    {
        std::array<std::string, kNumComponents> labels{};
        std::array<double, kNumComponents> fact_values{};
        std::array<double, kNumComponents> foil_values{};
        double fact_total = 0.0;
        double foil_total = 0.0;
        Action fact_action = Action::Idle;
        Action foil_action = Action::Idle;
    };

    BarChart rdBarData(const AgentModel& model, const Observation& obs, Action fact, Action foil);

    struct Point
    {
        double x = 0.0;
        double y = 0.0;
        bool operator==(const Point&) const = default;
    };

    struct Box
    {
        double cx = 0.0;
        double cy = 0.0;
        double w = 0.0;
        double h = 0.0;
        bool operator==(const Box&) const = default;
    };

    /// Maps world coordinates (meters, lane index) to SVG pixels. The camera
    /// follows the fact ego, which sits at `ego_anchor` of the view width.
    struct Viewport
    {
        int lanes = 4;
        double car_length = 5.0;
        double px_per_meter = 4.0;
        double lane_height = 28.0;
        double road_top = 24.0;
        double width = 640.0;
        double ego_anchor = 0.3;

        static Viewport forEnv(const EnvConfig& env);

        double height() const noexcept { return road_top * 2.0 + lane_height * lanes; }
        double pxX(double world_x, double camera_x) const noexcept;
        double pxY(int lane) const noexcept;
        double worldX(double px_x, double camera_x) const noexcept;
        int laneAt(double px_y) const noexcept;
        Box carBox(const Vehicle& v, double camera_x) const noexcept;
    };

    struct FrameVehicle
    {
        Box box;
        int lane = 0;
        double world_x = 0.0;
    };

    struct Frame
    {
        int offset = 0;  // steps after the origin
        int step_index = 0;
        double camera_x = 0.0;
        FrameVehicle ego;
        std::vector<FrameVehicle> others;
        std::optional<FrameVehicle> foil;
        bool foil_absent = false;
        std::optional<Point> crash_marker;
        bool fact_collided = false;
    };

    struct FrameSequence
    {
        Viewport viewport;
        Frame origin;  // offset 0: foil overlay sits exactly on the ego
        std::vector<Frame> frames;  // offsets 1..k
    };

    FrameSequence pairToFrames(const CFPair& pair, const EnvConfig& env);

    std::string frameToSvg(const Frame& frame, const Viewport& viewport);
    std::string barChartToSvg(const BarChart& chart);

    struct BarGeometry
    {
        double baseline = 130.0;
        double max_height = 100.0;
        double scale = 0.0;  // px per reward unit
    };
    BarGeometry barGeometry(const BarChart& chart) noexcept;

    // frame_00.svg (origin) .. frame_<k>.svg and, with a chart, bars.svg.
    std::vector<std::filesystem::path> renderSVG(const FrameSequence& frames, const std::optional<BarChart>& chart,
                                                 const std::filesystem::path& dir);

    struct CordPayload
    {
        std::string agent_id;
        std::string trace_id;
        int origin_index = 0;
        int k = 0;
        Action fact_action = Action::Idle;
        Action foil_action = Action::Idle;
        std::string cf_method;
        std::optional<double> score;
        std::string score_method;
        Importance importance;
        std::optional<TerminalCause> foil_terminal;
        bool degenerate = false;
        bool rejoins = false;
        BarChart bars;
        FrameSequence frames;
    };

    CordPayload buildCordPayload(const AgentModel& model, const CFPair& pair, std::optional<double> score = {},
                                 std::string score_method = "last-state");

    json toJson(const BarChart& chart);
    json toJson(const Frame& frame);
    json toJson(const FrameSequence& frames);
    json toJson(const CordPayload& payload);
}
