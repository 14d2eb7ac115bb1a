// Writes the canonical body-model file (data/body_model.json).
//
// Skeleton: SMPL-X joint order, T-pose facing +Z with the left side on +X.
// Surface points are spread over the capsule proxy, 2 pole points per capsule
// plus an area-proportional share of the remainder.

#include "interdance/body_model.hpp"

#include <iostream>

using namespace interdance;

namespace {

struct JointSpec {
  const char* name;
  int parent;
  double x, y, z;
};

// Left-side entries; right-side twins mirror x.
const JointSpec kBody[] = {
    {"pelvis", -1, 0.0, 0.93, 0.0},     {"left_hip", 0, 0.09, -0.08, 0.0},
    {"right_hip", 0, -0.09, -0.08, 0.0}, {"spine1", 0, 0.0, 0.11, 0.0},
    {"left_knee", 1, 0.01, -0.40, 0.0},  {"right_knee", 2, -0.01, -0.40, 0.0},
    {"spine2", 3, 0.0, 0.13, 0.0},       {"left_ankle", 4, 0.0, -0.38, -0.02},
    {"right_ankle", 5, 0.0, -0.38, -0.02}, {"spine3", 6, 0.0, 0.06, 0.01},
    {"left_foot", 7, 0.0, -0.035, 0.12}, {"right_foot", 8, 0.0, -0.035, 0.12},
    {"neck", 9, 0.0, 0.21, -0.02},       {"left_collar", 9, 0.07, 0.14, 0.0},
    {"right_collar", 9, -0.07, 0.14, 0.0}, {"head", 12, 0.0, 0.15, 0.03},
    {"left_shoulder", 13, 0.11, 0.03, 0.0}, {"right_shoulder", 14, -0.11, 0.03, 0.0},
    {"left_elbow", 16, 0.26, 0.0, 0.0},  {"right_elbow", 17, -0.26, 0.0, 0.0},
    {"left_wrist", 18, 0.25, 0.0, 0.0},  {"right_wrist", 19, -0.25, 0.0, 0.0},
    {"jaw", 15, 0.0, -0.03, 0.07},       {"left_eye_smplhf", 15, 0.03, 0.07, 0.08},
    {"right_eye_smplhf", 15, -0.03, 0.07, 0.08},
};

// Offsets of the left hand's chains relative to their parent (hand along +X).
struct FingerSpec {
  const char* name;
  double x1, y1, z1;  // first segment from the wrist
  double x2, y2, z2;
  double x3, y3, z3;
};

const FingerSpec kFingers[] = {
    {"index", 0.095, 0.0, 0.02, 0.035, 0.0, 0.0, 0.025, 0.0, 0.0},
    {"middle", 0.095, 0.0, 0.0, 0.035, 0.0, 0.0, 0.025, 0.0, 0.0},
    {"pinky", 0.085, 0.0, -0.035, 0.03, 0.0, 0.0, 0.02, 0.0, 0.0},
    {"ring", 0.09, 0.0, -0.018, 0.033, 0.0, 0.0, 0.023, 0.0, 0.0},
    {"thumb", 0.025, -0.015, 0.02, 0.025, 0.0, 0.01, 0.02, 0.0, 0.005},
};

struct CapsuleSpec {
  int a, b;
  double radius;
};

// 23 capsules; fingers are covered by one hand capsule (wrist -> middle3).
const CapsuleSpec kCapsules[] = {
    {0, 1, 0.09},   {0, 2, 0.09},   {0, 3, 0.12},   {1, 4, 0.075},  {2, 5, 0.075}, {3, 6, 0.12},
    {4, 7, 0.05},   {5, 8, 0.05},   {6, 9, 0.13},   {7, 10, 0.035}, {8, 11, 0.035}, {9, 12, 0.06},
    {9, 13, 0.06},  {9, 14, 0.06},  {12, 15, 0.09}, {13, 16, 0.05}, {14, 17, 0.05}, {16, 18, 0.045},
    {17, 19, 0.045}, {18, 20, 0.04}, {19, 21, 0.04}, {20, 30, 0.045}, {21, 45, 0.045},
};

constexpr double kGoldenAngle = 2.399963229728653;

BodyModel build() {
  BodyModel m;
  m.fps = 30.0;
  for (const auto& j : kBody) m.joints.push_back({j.name, j.parent, Vec3(j.x, j.y, j.z)});
  for (int side = 0; side < 2; ++side) {
    const double mirror = side == 0 ? 1.0 : -1.0;
    const int wrist = side == 0 ? 20 : 21;
    const std::string prefix = side == 0 ? "left_" : "right_";
    for (const auto& f : kFingers) {
      const int first = static_cast<int>(m.joints.size());
      m.joints.push_back({prefix + f.name + "1", wrist, Vec3(mirror * f.x1, f.y1, f.z1)});
      m.joints.push_back({prefix + f.name + "2", first, Vec3(mirror * f.x2, f.y2, f.z2)});
      m.joints.push_back({prefix + f.name + "3", first + 1, Vec3(mirror * f.x3, f.y3, f.z3)});
    }
  }
  for (int j = 25; j < 55; ++j) m.finger_joints.push_back(j);
  m.foot_joints = {7, 8, 10, 11};
  m.wrists = {20, 21};
  for (const auto& c : kCapsules) m.capsules.push_back({c.a, c.b, c.radius});

  // rest positions are needed for sampling
  std::vector<Vec3> rest(kJointCount);
  for (int i = 0; i < kJointCount; ++i) {
    const auto& j = m.joints[static_cast<std::size_t>(i)];
    rest[static_cast<std::size_t>(i)] = j.parent < 0 ? j.offset : rest[static_cast<std::size_t>(j.parent)] + j.offset;
  }

  const std::size_t count = m.capsules.size();
  std::vector<double> area(count);
  double total_area = 0.0;
  for (std::size_t c = 0; c < count; ++c) {
    const auto& cap = m.capsules[c];
    const double len = (rest[static_cast<std::size_t>(cap.b)] - rest[static_cast<std::size_t>(cap.a)]).norm();
    area[c] = 2.0 * std::numbers::pi * cap.radius * len + 4.0 * std::numbers::pi * cap.radius * cap.radius;
    total_area += area[c];
  }
  // largest-remainder allocation over what is left after the pole points
  const int spare = kSurfacePointCount - 2 * static_cast<int>(count);
  std::vector<int> quota(count, 2);
  std::vector<std::pair<double, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t c = 0; c < count; ++c) {
    const double share = spare * area[c] / total_area;
    const int whole = static_cast<int>(std::floor(share));
    quota[c] += whole;
    assigned += whole;
    remainders.push_back({share - whole, c});
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& l, const auto& r) { return l.first > r.first; });
  for (int k = 0; k < spare - assigned; ++k) ++quota[remainders[static_cast<std::size_t>(k)].second];

  for (std::size_t c = 0; c < count; ++c) {
    const auto& cap = m.capsules[c];
    const Vec3 a = rest[static_cast<std::size_t>(cap.a)];
    const Vec3 b = rest[static_cast<std::size_t>(cap.b)];
    const double len = (b - a).norm();
    const Vec3 axis = (b - a) / len;
    const Vec3 e1 = any_perpendicular(axis);
    const Vec3 e2 = axis.cross(e1);
    const double r = cap.radius;
    const double cap_area = 2.0 * std::numbers::pi * r * r;
    const bool blend = m.joints[static_cast<std::size_t>(cap.b)].parent == cap.a;
    for (int k = 0; k < quota[c]; ++k) {
      const double s = area[c] * k / (quota[c] - 1);
      const double phi = kGoldenAngle * k;
      const Vec3 ring = std::cos(phi) * e1 + std::sin(phi) * e2;
      Vec3 p;
      if (s <= cap_area) {
        const double cos_t = 1.0 - s / cap_area;
        p = a + r * (-cos_t * axis + std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t)) * ring);
      } else if (s <= area[c] - cap_area) {
        const double t = (s - cap_area) / (2.0 * std::numbers::pi * r);
        p = a + t * axis + r * ring;
      } else {
        const double cos_t = 1.0 - (area[c] - s) / cap_area;
        p = b + r * (cos_t * axis + std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t)) * ring);
      }
      SurfacePoint sp;
      sp.rest_position = p;
      const double u = std::clamp((p - a).dot(axis) / len, 0.0, 1.0);
      const double wb = blend ? std::clamp((u - 0.8) / 0.4, 0.0, 0.5) : 0.0;
      if (wb > 0.0) {
        sp.skin = {{cap.a, 1.0 - wb}, {cap.b, wb}};
      } else {
        sp.skin = {{cap.a, 1.0}};
      }
      m.surface_points.push_back(sp);
    }
  }
  validate_body_model(m);
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: gen_body_model <out.json>\n";
    return 1;
  }
  const BodyModel model = build();
  nlohmann::json doc = body_model_to_json(model);
  doc["description"] =
      "Fixed-skeleton stand-in body. 55 joints in SMPL-X order, T-pose facing +Z, left on +X. "
      "655 surface points lie on the 23 capsules: two pole points per capsule, the rest split "
      "by capsule surface area (largest remainder) and placed on an area-uniform golden-angle "
      "spiral. Points follow the capsule's parent joint, blending up to 0.5 toward the child "
      "joint over the last 20% of the bone.";
  std::ofstream out(argv[1]);
  out << doc.dump(1) << "\n";
  std::cout << "wrote " << model.joints.size() << " joints, " << model.surface_points.size()
            << " surface points, " << model.capsules.size() << " capsules to " << argv[1] << "\n";
  return 0;
}
