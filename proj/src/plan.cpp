#include "bimloc/plan.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace bimloc {

namespace {

struct Token {
  std::string text;
  int column;
};

std::vector<Token> tokenize(const std::string& line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= line.size() || line[i] == '#') break;
    std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    out.push_back({line.substr(start, i - start), static_cast<int>(start) + 1});
  }
  return out;
}

double parse_num(const Token& tok, int line) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(tok.text, &pos);
  } catch (const std::exception&) {
    throw PlanError(line, tok.column, "expected a number, got '" + tok.text + "'");
  }
  if (pos != tok.text.size())
    throw PlanError(line, tok.column, "trailing characters in number '" + tok.text + "'");
  if (!std::isfinite(v)) throw PlanError(line, tok.column, "non-finite number");
  return v;
}

void require_count(const std::vector<Token>& toks, std::size_t n, int line, const char* what) {
  if (toks.size() != n)
    throw PlanError(line, toks.front().column,
                    std::string(what) + " record needs " + std::to_string(n - 1) + " fields, got " +
                        std::to_string(toks.size() - 1));
}

}  // namespace

const WallNode* PriorGraph::find_wall(const std::string& node_id) const {
  for (const auto& n : wall_nodes)
    if (n.id == node_id) return &n;
  return nullptr;
}

std::vector<int> PriorGraph::room_wall_indices(const std::string& room_id) const {
  std::vector<int> out;
  for (const auto& e : edges) {
    if (e.room_id != room_id) continue;
    for (const auto& nid : e.wall_node_ids)
      for (int i = 0; i < static_cast<int>(wall_nodes.size()); ++i)
        if (wall_nodes[i].id == nid) out.push_back(i);
  }
  return out;
}

Plane wall_plane(const WallSpec& w) {
  return Plane{w.normal, -w.start.dot(w.normal)};
}

Plane duplicate_wall(const Plane& p, double thickness) {
  return Plane{-p.n, p.d + thickness};
}

const Storey& select_storey(const BuildingPlan& plan, double z) {
  if (plan.storeys.empty()) throw std::runtime_error("plan has no storeys");
  const Storey* best = &plan.storeys.front();
  for (const auto& s : plan.storeys)
    if (s.elevation <= z && s.elevation >= best->elevation) best = &s;
  return *best;
}

bool room_contains(const RoomSpec& r, const Eigen::Vector2d& p) {
  return p.x() >= r.bbox_min.x() && p.x() <= r.bbox_max.x() && p.y() >= r.bbox_min.y() &&
         p.y() <= r.bbox_max.y();
}

bool room_contains(const RoomNode& r, const Eigen::Vector2d& p) {
  return p.x() >= r.bbox_min.x() && p.x() <= r.bbox_max.x() && p.y() >= r.bbox_min.y() &&
         p.y() <= r.bbox_max.y();
}

PriorGraph build_prior_layers(const Storey& s) {
  PriorGraph g;
  g.storey_id = s.id;
  g.storey_elevation = s.elevation;
  for (const auto& w : s.walls) {
    const Plane front = wall_plane(w);
    const Plane back = duplicate_wall(front, w.thickness);
    g.wall_nodes.push_back({w.id + ":front", w.id, WallSide::Front, front, classify_wall(front)});
    g.wall_nodes.push_back({w.id + ":back", w.id, WallSide::Back, back, classify_wall(back)});
  }
  for (const auto& r : s.rooms) {
    RoomNode node;
    node.id = r.id;
    node.center = 0.5 * (r.bbox_min + r.bbox_max);
    node.bbox_min = r.bbox_min;
    node.bbox_max = r.bbox_max;
    g.room_nodes.push_back(node);
    RoomWallEdge edge;
    edge.room_id = r.id;
    for (const auto& wid : r.wall_ids) {
      edge.wall_node_ids.push_back(wid + ":front");
      edge.wall_node_ids.push_back(wid + ":back");
    }
    g.edges.push_back(edge);
  }
  return g;
}

BuildingPlan parse_plan(const std::string& text) {
  BuildingPlan plan;
  std::unordered_map<std::string, int> storey_index;
  std::unordered_map<std::string, std::pair<int, int>> wall_index;  // id -> (storey, wall)
  std::unordered_set<std::string> room_ids;

  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto toks = tokenize(line);
    if (toks.empty()) continue;
    const std::string& kind = toks[0].text;

    if (kind == "storey") {
      require_count(toks, 3, lineno, "storey");
      Storey s;
      s.id = toks[1].text;
      s.elevation = parse_num(toks[2], lineno);
      if (storey_index.count(s.id))
        throw PlanError(lineno, toks[1].column, "duplicate storey id '" + s.id + "'");
      if (!plan.storeys.empty() && s.elevation <= plan.storeys.back().elevation)
        throw PlanError(lineno, toks[2].column, "storey elevations must be strictly increasing");
      storey_index[s.id] = static_cast<int>(plan.storeys.size());
      plan.storeys.push_back(std::move(s));
    } else if (kind == "wall") {
      require_count(toks, 12, lineno, "wall");
      WallSpec w;
      w.id = toks[1].text;
      w.storey_id = toks[2].text;
      for (int i = 0; i < 3; ++i) w.start[i] = parse_num(toks[3 + i], lineno);
      for (int i = 0; i < 3; ++i) w.normal[i] = parse_num(toks[6 + i], lineno);
      w.thickness = parse_num(toks[9], lineno);
      w.length = parse_num(toks[10], lineno);
      w.height = parse_num(toks[11], lineno);
      auto sit = storey_index.find(w.storey_id);
      if (sit == storey_index.end())
        throw PlanError(lineno, toks[2].column, "unknown storey '" + w.storey_id + "'");
      if (wall_index.count(w.id))
        throw PlanError(lineno, toks[1].column, "duplicate wall id '" + w.id + "'");
      const double norm = w.normal.norm();
      if (std::abs(norm - 1.0) > 1e-9) {
        // Renormalize only inside the export-rounding band; reject otherwise.
        if (norm < 0.99 || norm > 1.01)
          throw PlanError(lineno, toks[6].column,
                          "wall normal is not unit length (|n| = " + std::to_string(norm) + ")");
        w.normal /= norm;
      }
      if (std::abs(w.normal.z()) >= 0.707)
        throw PlanError(lineno, toks[8].column, "wall normal must be near-horizontal (|nz| < 0.707)");
      if (w.thickness < 0.0) throw PlanError(lineno, toks[9].column, "thickness must be >= 0");
      if (w.length <= 0.0) throw PlanError(lineno, toks[10].column, "length must be > 0");
      if (w.height <= 0.0) throw PlanError(lineno, toks[11].column, "height must be > 0");
      Storey& s = plan.storeys[sit->second];
      wall_index[w.id] = {sit->second, static_cast<int>(s.walls.size())};
      s.walls.push_back(std::move(w));
    } else if (kind == "room") {
      require_count(toks, 13, lineno, "room");
      RoomSpec r;
      r.id = toks[1].text;
      r.storey_id = toks[2].text;
      r.anchor = {parse_num(toks[3], lineno), parse_num(toks[4], lineno)};
      r.bbox_min = {parse_num(toks[5], lineno), parse_num(toks[6], lineno)};
      r.bbox_max = {parse_num(toks[7], lineno), parse_num(toks[8], lineno)};
      for (int i = 0; i < 4; ++i) r.wall_ids.push_back(toks[9 + i].text);
      auto sit = storey_index.find(r.storey_id);
      if (sit == storey_index.end())
        throw PlanError(lineno, toks[2].column, "unknown storey '" + r.storey_id + "'");
      if (room_ids.count(r.id))
        throw PlanError(lineno, toks[1].column, "duplicate room id '" + r.id + "'");
      if (!(r.bbox_min.x() < r.bbox_max.x() && r.bbox_min.y() < r.bbox_max.y()))
        throw PlanError(lineno, toks[5].column, "room bbox_min must be < bbox_max componentwise");
      if (!room_contains(r, r.anchor))
        throw PlanError(lineno, toks[3].column, "room anchor lies outside its bbox");
      std::unordered_set<std::string> seen;
      for (int i = 0; i < 4; ++i) {
        const std::string& wid = r.wall_ids[i];
        auto wit = wall_index.find(wid);
        if (wit == wall_index.end() || wit->second.first != sit->second)
          throw PlanError(lineno, toks[9 + i].column,
                          "room '" + r.id + "' references unknown wall '" + wid + "'");
        if (!seen.insert(wid).second)
          throw PlanError(lineno, toks[9 + i].column, "room lists wall '" + wid + "' twice");
      }
      room_ids.insert(r.id);
      plan.storeys[sit->second].rooms.push_back(std::move(r));
    } else {
      throw PlanError(lineno, toks[0].column, "unknown record kind '" + kind + "'");
    }
  }
  if (plan.storeys.empty()) throw PlanError(lineno, 1, "plan defines no storeys");
  return plan;
}

BuildingPlan load_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open plan file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_plan(ss.str());
}

nlohmann::ordered_json prior_to_json(const PriorGraph& g) {
  nlohmann::ordered_json j;
  j["wall_nodes"] = nlohmann::ordered_json::array();
  for (const auto& n : g.wall_nodes) {
    nlohmann::ordered_json w;
    w["id"] = n.id;
    w["side"] = n.side == WallSide::Front ? "front" : "back";
    w["n"] = {n.plane.n.x(), n.plane.n.y(), n.plane.n.z()};
    w["d"] = n.plane.d;
    j["wall_nodes"].push_back(std::move(w));
  }
  j["room_nodes"] = nlohmann::ordered_json::array();
  for (const auto& r : g.room_nodes) {
    nlohmann::ordered_json n;
    n["id"] = r.id;
    n["center"] = {r.center.x(), r.center.y()};
    n["bbox"] = {r.bbox_min.x(), r.bbox_min.y(), r.bbox_max.x(), r.bbox_max.y()};
    j["room_nodes"].push_back(std::move(n));
  }
  j["edges"] = nlohmann::ordered_json::array();
  for (const auto& e : g.edges) {
    nlohmann::ordered_json n;
    n["room"] = e.room_id;
    n["walls"] = e.wall_node_ids;
    j["edges"].push_back(std::move(n));
  }
  return j;
}

}  // namespace bimloc
