#pragma once

#include "bimloc/geometry.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace bimloc {

struct WallSpec {
  std::string id;
  std::string storey_id;
  Eigen::Vector3d start{Eigen::Vector3d::Zero()};
  Eigen::Vector3d normal{Eigen::Vector3d::UnitX()};
  double thickness{0.0};
  double length{1.0};
  double height{1.0};
};

struct RoomSpec {
  std::string id;
  std::string storey_id;
  Eigen::Vector2d anchor{Eigen::Vector2d::Zero()};
  Eigen::Vector2d bbox_min{Eigen::Vector2d::Zero()};
  Eigen::Vector2d bbox_max{Eigen::Vector2d::Ones()};
  std::vector<std::string> wall_ids;  // exactly 4
};

struct Storey {
  std::string id;
  double elevation{0.0};
  std::vector<WallSpec> walls;
  std::vector<RoomSpec> rooms;
};

struct BuildingPlan {
  std::vector<Storey> storeys;
};

enum class WallSide { Front, Back };

struct WallNode {
  std::string id;       // "<wall_id>:front" / "<wall_id>:back"
  std::string wall_id;
  WallSide side{WallSide::Front};
  Plane plane;
  WallClass cls{WallClass::XVertical};
};

struct RoomNode {
  std::string id;
  Eigen::Vector2d center{Eigen::Vector2d::Zero()};
  Eigen::Vector2d bbox_min{Eigen::Vector2d::Zero()};
  Eigen::Vector2d bbox_max{Eigen::Vector2d::Ones()};
};

struct RoomWallEdge {
  std::string room_id;
  std::vector<std::string> wall_node_ids;  // both sides of the room's 4 walls
};

struct PriorGraph {
  std::string storey_id;
  double storey_elevation{0.0};
  std::vector<WallNode> wall_nodes;
  std::vector<RoomNode> room_nodes;
  std::vector<RoomWallEdge> edges;

  const WallNode* find_wall(const std::string& node_id) const;
  // Indices into wall_nodes for a room's edge set; empty when unknown room.
  std::vector<int> room_wall_indices(const std::string& room_id) const;
};

struct PlanError : std::runtime_error {
  int line{0};
  int column{0};
  PlanError(int line_in, int col_in, const std::string& what)
      : std::runtime_error("plan:" + std::to_string(line_in) + ":" + std::to_string(col_in) +
                           ": " + what),
        line(line_in),
        column(col_in) {}
};

BuildingPlan parse_plan(const std::string& text);
BuildingPlan load_plan(const std::string& path);

Plane wall_plane(const WallSpec& w);
Plane duplicate_wall(const Plane& p, double thickness);
const Storey& select_storey(const BuildingPlan& plan, double z);
PriorGraph build_prior_layers(const Storey& s);
bool room_contains(const RoomSpec& r, const Eigen::Vector2d& p);
bool room_contains(const RoomNode& r, const Eigen::Vector2d& p);

nlohmann::ordered_json prior_to_json(const PriorGraph& g);

}  // namespace bimloc
