#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "workbench/detail/numbers.hpp"
#include "workbench/error.hpp"
#include "workbench/pose.hpp"

namespace workbench {

/// Raw xyz/rpy as written in the URDF. Kept verbatim so serialization round-trips exactly.
struct Origin {
  Eigen::Vector3d xyz = Eigen::Vector3d::Zero();
  Eigen::Vector3d rpy = Eigen::Vector3d::Zero();

  Pose pose() const { return Pose::from_xyz_rpy(xyz, rpy); }
  bool operator==(const Origin&) const = default;
};

enum class GeometryKind { Box, Cylinder, Sphere, Mesh };

struct Geometry {
  GeometryKind kind = GeometryKind::Box;
  Eigen::Vector3d size = Eigen::Vector3d::Ones();  // box
  double radius = 0.0;                             // cylinder, sphere
  double length = 0.0;                             // cylinder
  std::string mesh_filename;                       // opaque reference, never loaded
  Eigen::Vector3d mesh_scale = Eigen::Vector3d::Ones();

  bool operator==(const Geometry&) const = default;
};

struct Shape {
  Origin origin;
  Geometry geometry;

  bool operator==(const Shape&) const = default;
};

struct Link {
  std::string name;
  std::vector<Shape> visuals;
  std::optional<Shape> collision;

  bool operator==(const Link&) const = default;
};

enum class JointKind { Fixed, Revolute, Continuous, Prismatic };

constexpr std::string_view joint_kind_name(JointKind kind) noexcept {
  switch (kind) {
    case JointKind::Fixed: return "fixed";
    case JointKind::Revolute: return "revolute";
    case JointKind::Continuous: return "continuous";
    case JointKind::Prismatic: return "prismatic";
  }
  return "fixed";
}

/// Position bounds are +-infinity for continuous joints.
struct JointLimits {
  double lower = 0.0;
  double upper = 0.0;
  double velocity = 0.0;
  double effort = 0.0;

  bool operator==(const JointLimits&) const = default;
};

struct Joint {
  std::string name;
  JointKind kind = JointKind::Fixed;
  std::string parent;
  std::string child;
  Origin origin;
  Eigen::Vector3d axis = Eigen::Vector3d::UnitX();
  std::optional<JointLimits> limits;

  bool is_actuated() const { return kind != JointKind::Fixed; }

  double clamp(double q) const {
    if (!limits) return q;
    return std::clamp(q, limits->lower, limits->upper);
  }

  bool operator==(const Joint&) const = default;
};

struct RobotModel {
  std::string name;
  std::vector<Link> links;
  std::vector<Joint> joints;
  std::string root_link;

  const Link* find_link(std::string_view link_name) const {
    for (const auto& l : links)
      if (l.name == link_name) return &l;
    return nullptr;
  }

  const Joint* find_joint(std::string_view joint_name) const {
    for (const auto& j : joints)
      if (j.name == joint_name) return &j;
    return nullptr;
  }

  /// Joint whose child is `link_name`, or nullptr for the root.
  const Joint* parent_joint(std::string_view link_name) const {
    for (const auto& j : joints)
      if (j.child == link_name) return &j;
    return nullptr;
  }

  std::size_t actuated_joint_count() const {
    std::size_t n = 0;
    for (const auto& j : joints) n += j.is_actuated() ? 1 : 0;
    return n;
  }

  bool operator==(const RobotModel&) const = default;
};

namespace detail {

namespace pt = boost::property_tree;

inline const pt::ptree* attributes(const pt::ptree& node) {
  return node.get_child_optional("<xmlattr>").get_ptr();
}

inline std::optional<std::string> attribute(const pt::ptree& node, const std::string& key) {
  const pt::ptree* attrs = attributes(node);
  if (attrs == nullptr) return std::nullopt;
  const auto child = attrs->get_child_optional(pt::ptree::path_type(key, '\0'));
  if (!child) return std::nullopt;
  return child->data();
}

inline std::string required_attribute(const pt::ptree& node, const std::string& element,
                                      const std::string& key) {
  auto value = attribute(node, key);
  if (!value) throw Error(ErrorCode::MalformedXml, "<" + element + "> is missing attribute '" + key + "'");
  return *value;
}

inline double number_attribute(const pt::ptree& node, const std::string& element,
                               const std::string& key, std::optional<double> fallback) {
  const auto text = attribute(node, key);
  if (!text) {
    if (fallback) return *fallback;
    throw Error(ErrorCode::MalformedXml, "<" + element + "> is missing attribute '" + key + "'");
  }
  const auto value = parse_double(*text);
  if (!value || !std::isfinite(*value))
    throw Error(ErrorCode::MalformedXml, "<" + element + "> attribute '" + key + "' is not a number: '" + *text + "'");
  return *value;
}

inline Eigen::Vector3d vector3_attribute(const pt::ptree& node, const std::string& element,
                                         const std::string& key, const Eigen::Vector3d& fallback) {
  const auto text = attribute(node, key);
  if (!text) return fallback;
  const auto values = parse_doubles(*text);
  if (!values || values->size() != 3)
    throw Error(ErrorCode::MalformedXml, "<" + element + "> attribute '" + key + "' must hold 3 numbers");
  for (double v : *values)
    if (!std::isfinite(v))
      throw Error(ErrorCode::MalformedXml, "<" + element + "> attribute '" + key + "' is not finite");
  return {(*values)[0], (*values)[1], (*values)[2]};
}

inline Origin parse_origin(const pt::ptree& parent) {
  Origin origin;
  if (const auto node = parent.get_child_optional("origin")) {
    origin.xyz = vector3_attribute(*node, "origin", "xyz", Eigen::Vector3d::Zero());
    origin.rpy = vector3_attribute(*node, "origin", "rpy", Eigen::Vector3d::Zero());
  }
  return origin;
}

inline void require_positive(double v, const std::string& what) {
  if (!(v > 0.0)) throw Error(ErrorCode::InvalidValue, what + " must be strictly positive");
}

inline Geometry parse_geometry(const pt::ptree& shape_node, const std::string& link_name) {
  Geometry geom;  // unit box when <geometry> is absent
  const auto geometry_node = shape_node.get_child_optional("geometry");
  if (!geometry_node) return geom;
  for (const auto& [tag, node] : *geometry_node) {
    if (tag == "box") {
      geom.kind = GeometryKind::Box;
      const auto text = attribute(node, "size");
      if (!text) throw Error(ErrorCode::MalformedXml, "<box> in link '" + link_name + "' is missing 'size'");
      geom.size = vector3_attribute(node, "box", "size", Eigen::Vector3d::Ones());
      for (int i = 0; i < 3; ++i) require_positive(geom.size[i], "box size in link '" + link_name + "'");
      return geom;
    }
    if (tag == "cylinder") {
      geom.kind = GeometryKind::Cylinder;
      geom.radius = number_attribute(node, "cylinder", "radius", std::nullopt);
      geom.length = number_attribute(node, "cylinder", "length", std::nullopt);
      require_positive(geom.radius, "cylinder radius in link '" + link_name + "'");
      require_positive(geom.length, "cylinder length in link '" + link_name + "'");
      return geom;
    }
    if (tag == "sphere") {
      geom.kind = GeometryKind::Sphere;
      geom.radius = number_attribute(node, "sphere", "radius", std::nullopt);
      require_positive(geom.radius, "sphere radius in link '" + link_name + "'");
      return geom;
    }
    if (tag == "mesh") {
      geom.kind = GeometryKind::Mesh;
      geom.mesh_filename = required_attribute(node, "mesh", "filename");
      geom.mesh_scale = vector3_attribute(node, "mesh", "scale", Eigen::Vector3d::Ones());
      for (int i = 0; i < 3; ++i) require_positive(geom.mesh_scale[i], "mesh scale in link '" + link_name + "'");
      return geom;
    }
  }
  return geom;
}

inline Link parse_link(const pt::ptree& node) {
  Link link;
  link.name = required_attribute(node, "link", "name");
  if (link.name.empty()) throw Error(ErrorCode::MalformedXml, "<link> has an empty name");
  for (const auto& [tag, child] : node) {
    if (tag == "visual") {
      link.visuals.push_back({parse_origin(child), parse_geometry(child, link.name)});
    } else if (tag == "collision" && !link.collision) {
      link.collision = Shape{parse_origin(child), parse_geometry(child, link.name)};
    }
  }
  return link;
}

inline Joint parse_joint(const pt::ptree& node) {
  Joint joint;
  joint.name = required_attribute(node, "joint", "name");
  if (joint.name.empty()) throw Error(ErrorCode::MalformedXml, "<joint> has an empty name");
  const std::string type = required_attribute(node, "joint", "type");
  if (type == "fixed") {
    joint.kind = JointKind::Fixed;
  } else if (type == "revolute") {
    joint.kind = JointKind::Revolute;
  } else if (type == "continuous") {
    joint.kind = JointKind::Continuous;
  } else if (type == "prismatic") {
    joint.kind = JointKind::Prismatic;
  } else if (type == "spherical" || type == "planar" || type == "floating") {
    throw Error(ErrorCode::UnsupportedJointType,
                "joint '" + joint.name + "' has unsupported type '" + type + "'");
  } else {
    throw Error(ErrorCode::MalformedXml, "joint '" + joint.name + "' has unknown type '" + type + "'");
  }

  const auto parent = node.get_child_optional("parent");
  const auto child = node.get_child_optional("child");
  if (!parent || !child)
    throw Error(ErrorCode::MalformedXml, "joint '" + joint.name + "' needs <parent> and <child>");
  joint.parent = required_attribute(*parent, "parent", "link");
  joint.child = required_attribute(*child, "child", "link");
  joint.origin = parse_origin(node);

  if (const auto axis_node = node.get_child_optional("axis")) {
    joint.axis = vector3_attribute(*axis_node, "axis", "xyz", Eigen::Vector3d::UnitX());
  }
  const double norm = joint.axis.norm();
  if (joint.is_actuated() || node.get_child_optional("axis")) {
    if (!(norm >= 0.9 && norm <= 1.1))
      throw Error(ErrorCode::NonUnitAxis, "joint '" + joint.name + "' axis norm " + format_double(norm) +
                                              " is outside [0.9, 1.1]");
    // Leave already-unit axes untouched so serialize/parse is a fixed point.
    if (std::abs(norm - 1.0) > 1e-12) joint.axis /= norm;
  }

  const auto limit_node = node.get_child_optional("limit");
  if (joint.kind == JointKind::Revolute || joint.kind == JointKind::Prismatic) {
    if (!limit_node || !attribute(*limit_node, "velocity"))
      throw Error(ErrorCode::MissingLimits, "joint '" + joint.name + "' requires <limit> with velocity");
    JointLimits lim;
    lim.lower = number_attribute(*limit_node, "limit", "lower", 0.0);
    lim.upper = number_attribute(*limit_node, "limit", "upper", 0.0);
    lim.velocity = number_attribute(*limit_node, "limit", "velocity", std::nullopt);
    lim.effort = number_attribute(*limit_node, "limit", "effort", 0.0);
    if (lim.lower > lim.upper)
      throw Error(ErrorCode::InvalidValue, "joint '" + joint.name + "' has lower > upper");
    if (lim.velocity < 0.0 || lim.effort < 0.0)
      throw Error(ErrorCode::InvalidValue, "joint '" + joint.name + "' has a negative velocity or effort limit");
    joint.limits = lim;
  } else if (joint.kind == JointKind::Continuous) {
    if (!limit_node || !attribute(*limit_node, "velocity"))
      throw Error(ErrorCode::MissingLimits, "continuous joint '" + joint.name + "' requires a velocity limit");
    JointLimits lim;
    lim.lower = -std::numeric_limits<double>::infinity();
    lim.upper = std::numeric_limits<double>::infinity();
    lim.velocity = number_attribute(*limit_node, "limit", "velocity", std::nullopt);
    lim.effort = number_attribute(*limit_node, "limit", "effort", 0.0);
    if (lim.velocity < 0.0 || lim.effort < 0.0)
      throw Error(ErrorCode::InvalidValue, "joint '" + joint.name + "' has a negative velocity or effort limit");
    joint.limits = lim;
  }
  return joint;
}

inline std::string validate_tree(const std::vector<Link>& links, const std::vector<Joint>& joints) {
  std::set<std::string> link_names;
  for (const auto& l : links)
    if (!link_names.insert(l.name).second)
      throw Error(ErrorCode::DuplicateName, "duplicate link name '" + l.name + "'");
  std::set<std::string> joint_names;
  for (const auto& j : joints)
    if (!joint_names.insert(j.name).second)
      throw Error(ErrorCode::DuplicateName, "duplicate joint name '" + j.name + "'");

  std::map<std::string, const Joint*> parent_of;
  for (const auto& j : joints) {
    if (!link_names.count(j.parent))
      throw Error(ErrorCode::DanglingLinkReference, "joint '" + j.name + "' references unknown parent link '" + j.parent + "'");
    if (!link_names.count(j.child))
      throw Error(ErrorCode::DanglingLinkReference, "joint '" + j.name + "' references unknown child link '" + j.child + "'");
    if (j.parent == j.child)
      throw Error(ErrorCode::CycleDetected, "joint '" + j.name + "' connects link '" + j.child + "' to itself");
    if (!parent_of.emplace(j.child, &j).second)
      throw Error(ErrorCode::NotATree, "link '" + j.child + "' has more than one parent joint");
  }

  std::vector<std::string> roots;
  for (const auto& l : links)
    if (!parent_of.count(l.name)) roots.push_back(l.name);
  if (links.empty()) throw Error(ErrorCode::MalformedXml, "robot has no links");
  if (roots.empty()) throw Error(ErrorCode::CycleDetected, "every link has a parent; the joint graph is cyclic");
  if (roots.size() > 1)
    throw Error(ErrorCode::NotATree, "robot has " + std::to_string(roots.size()) + " root links ('" + roots[0] +
                                         "', '" + roots[1] + "', ...)");

  // Every link has at most one parent, so any link not reachable from the root lies on a cycle.
  std::map<std::string, std::vector<std::string>> children;
  for (const auto& j : joints) children[j.parent].push_back(j.child);
  std::set<std::string> seen{roots[0]};
  std::vector<std::string> stack{roots[0]};
  while (!stack.empty()) {
    const std::string cur = stack.back();
    stack.pop_back();
    for (const auto& c : children[cur])
      if (seen.insert(c).second) stack.push_back(c);
  }
  if (seen.size() != links.size()) {
    for (const auto& l : links)
      if (!seen.count(l.name))
        throw Error(ErrorCode::CycleDetected, "link '" + l.name + "' lies on a joint cycle");
  }
  return roots[0];
}

inline std::string xml_escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string format_vec3(const Eigen::Vector3d& v) {
  return format_double(v.x()) + " " + format_double(v.y()) + " " + format_double(v.z());
}

inline void write_origin(std::ostringstream& out, const Origin& origin, const char* indent) {
  out << indent << "<origin xyz=\"" << format_vec3(origin.xyz) << "\" rpy=\"" << format_vec3(origin.rpy)
      << "\"/>\n";
}

inline void write_shape(std::ostringstream& out, const char* tag, const Shape& shape) {
  out << "    <" << tag << ">\n";
  write_origin(out, shape.origin, "      ");
  out << "      <geometry>\n";
  const Geometry& g = shape.geometry;
  switch (g.kind) {
    case GeometryKind::Box:
      out << "        <box size=\"" << format_vec3(g.size) << "\"/>\n";
      break;
    case GeometryKind::Cylinder:
      out << "        <cylinder radius=\"" << format_double(g.radius) << "\" length=\"" << format_double(g.length)
          << "\"/>\n";
      break;
    case GeometryKind::Sphere:
      out << "        <sphere radius=\"" << format_double(g.radius) << "\"/>\n";
      break;
    case GeometryKind::Mesh:
      out << "        <mesh filename=\"" << xml_escape(g.mesh_filename) << "\" scale=\"" << format_vec3(g.mesh_scale)
          << "\"/>\n";
      break;
  }
  out << "      </geometry>\n    </" << tag << ">\n";
}

}  // namespace detail

/// Parses and validates a plain (non-xacro) URDF document.
inline RobotModel parse_urdf(const std::string& xml_text) {
  namespace pt = boost::property_tree;
  pt::ptree doc;
  try {
    std::istringstream in(xml_text);
    pt::read_xml(in, doc, pt::xml_parser::no_comments);
  } catch (const pt::ptree_error& e) {
    throw Error(ErrorCode::MalformedXml, std::string("XML parse error: ") + e.what());
  }
  const auto robot = doc.get_child_optional("robot");
  if (!robot) throw Error(ErrorCode::MalformedXml, "document has no <robot> element");

  RobotModel model;
  model.name = detail::required_attribute(*robot, "robot", "name");
  for (const auto& [tag, node] : *robot) {
    if (tag == "link") {
      model.links.push_back(detail::parse_link(node));
    } else if (tag == "joint") {
      model.joints.push_back(detail::parse_joint(node));
    }
  }
  model.root_link = detail::validate_tree(model.links, model.joints);
  return model;
}

/// Writes the model back out as URDF. parse_urdf(to_urdf_xml(m)) == m for any parsed m.
inline std::string to_urdf_xml(const RobotModel& model) {
  using detail::format_double;
  using detail::xml_escape;
  std::ostringstream out;
  out << "<?xml version=\"1.0\"?>\n<robot name=\"" << xml_escape(model.name) << "\">\n";
  for (const auto& link : model.links) {
    out << "  <link name=\"" << xml_escape(link.name) << "\">\n";
    for (const auto& v : link.visuals) detail::write_shape(out, "visual", v);
    if (link.collision) detail::write_shape(out, "collision", *link.collision);
    out << "  </link>\n";
  }
  for (const auto& j : model.joints) {
    out << "  <joint name=\"" << xml_escape(j.name) << "\" type=\"" << joint_kind_name(j.kind) << "\">\n";
    out << "    <parent link=\"" << xml_escape(j.parent) << "\"/>\n";
    out << "    <child link=\"" << xml_escape(j.child) << "\"/>\n";
    detail::write_origin(out, j.origin, "    ");
    out << "    <axis xyz=\"" << detail::format_vec3(j.axis) << "\"/>\n";
    if (j.limits) {
      out << "    <limit";
      if (j.kind != JointKind::Continuous)
        out << " lower=\"" << format_double(j.limits->lower) << "\" upper=\"" << format_double(j.limits->upper) << "\"";
      out << " velocity=\"" << format_double(j.limits->velocity) << "\" effort=\""
          << format_double(j.limits->effort) << "\"/>\n";
    }
    out << "  </joint>\n";
  }
  out << "</robot>\n";
  return out.str();
}

/// One actuated joint of a chain, with every fixed transform since the previous
/// actuated joint (or the chain base) folded into `offset`.
struct ChainJoint {
  std::string name;
  JointKind kind = JointKind::Revolute;
  std::string child_link;
  Pose offset;
  Eigen::Vector3d axis = Eigen::Vector3d::UnitX();
  JointLimits limits;

  double clamp(double q) const { return std::clamp(q, limits.lower, limits.upper); }
};

/// Serial chain base -> tip. Frames reported by forward kinematics are
/// base, each actuated joint's child link, then the tip when trailing fixed joints exist.
struct JointChain {
  std::string base_link;
  std::string tip_link;
  std::vector<ChainJoint> joints;
  Pose tip_offset;

  std::size_t dof() const { return joints.size(); }

  std::vector<std::string> joint_names() const {
    std::vector<std::string> names;
    for (const auto& j : joints) names.push_back(j.name);
    return names;
  }

  std::vector<std::string> frame_links() const {
    std::vector<std::string> names{base_link};
    for (const auto& j : joints) names.push_back(j.child_link);
    if (names.back() != tip_link) names.push_back(tip_link);
    return names;
  }
};

inline JointChain build_chain(const RobotModel& model, const std::string& base_link, const std::string& tip_link) {
  if (!model.find_link(base_link)) throw Error(ErrorCode::UnknownLink, "unknown base link '" + base_link + "'");
  if (!model.find_link(tip_link)) throw Error(ErrorCode::UnknownLink, "unknown tip link '" + tip_link + "'");

  std::vector<const Joint*> path;  // tip -> base
  std::string cur = tip_link;
  while (cur != base_link) {
    const Joint* j = model.parent_joint(cur);
    if (j == nullptr)
      throw Error(ErrorCode::NoPath, "link '" + tip_link + "' is not a descendant of '" + base_link + "'");
    path.push_back(j);
    cur = j->parent;
    if (path.size() > model.joints.size()) throw Error(ErrorCode::CycleDetected, "joint cycle while walking chain");
  }

  JointChain chain;
  chain.base_link = base_link;
  chain.tip_link = tip_link;
  Pose pending;
  for (auto it = path.rbegin(); it != path.rend(); ++it) {
    const Joint& j = **it;
    pending = pending * j.origin.pose();
    if (!j.is_actuated()) continue;
    ChainJoint cj;
    cj.name = j.name;
    cj.kind = j.kind;
    cj.child_link = j.child;
    cj.offset = pending;
    cj.axis = j.axis;
    cj.limits = j.limits.value_or(JointLimits{});
    chain.joints.push_back(std::move(cj));
    pending = Pose::identity();
  }
  chain.tip_offset = pending;
  return chain;
}

}  // namespace workbench
