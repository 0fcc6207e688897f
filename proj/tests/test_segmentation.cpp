#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "limbfit/segmentation.hpp"

using namespace limbfit;

namespace {

std::vector<Vec3> blob(Rng& rng, const Vec3& center, double spread, int n) {
  std::vector<Vec3> out;
  for (int i = 0; i < n; ++i)
    out.push_back(center + spread * Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1),
                                         rng.uniform(-1, 1)));
  return out;
}

}  // namespace

TEST_SUITE("segmentation") {

TEST_CASE("kmeans on two 1d pairs") {
  const std::vector<Vec3> pts = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(10, 0, 0),
                                 Vec3(11, 0, 0)};
  const ClusterLabeling lab = kmeans(pts, 2, 3);
  REQUIRE(lab.k() == 2);
  CHECK(lab.labels[0] == lab.labels[1]);
  CHECK(lab.labels[2] == lab.labels[3]);
  CHECK(lab.labels[0] != lab.labels[2]);
  // centers 0.5 and 10.5, four points at squared distance 0.25 each
  CHECK(lab.inertia == doctest::Approx(1.0).epsilon(1e-12));
  std::vector<double> xs = {lab.centers[0].x(), lab.centers[1].x()};
  std::sort(xs.begin(), xs.end());
  CHECK(xs[0] == doctest::Approx(0.5));
  CHECK(xs[1] == doctest::Approx(10.5));
}

TEST_CASE("kmeans inertia never increases across Lloyd iterations") {
  Rng rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Vec3> pts;
    const int blobs = 2 + static_cast<int>(rng.index(4));
    for (int b = 0; b < blobs; ++b) {
      const auto extra = blob(rng, Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5),
                                        rng.uniform(-5, 5)),
                              rng.uniform(0.1, 1.0), 20);
      pts.insert(pts.end(), extra.begin(), extra.end());
    }
    const ClusterLabeling lab = kmeans(pts, blobs, 1000 + trial);
    REQUIRE(!lab.inertia_history.empty());
    for (size_t i = 1; i < lab.inertia_history.size(); ++i)
      CHECK(lab.inertia_history[i] <= lab.inertia_history[i - 1] + 1e-9);
    CHECK(lab.inertia == doctest::Approx(lab.inertia_history.back()));
  }
}

TEST_CASE("kmeans recovers well-separated clusters exactly") {
  Rng rng(73);
  const std::vector<Vec3> centers = {Vec3(0, 0, 0), Vec3(12, 0, 0), Vec3(0, 12, 0),
                                     Vec3(0, 0, 12)};
  std::vector<Vec3> pts;
  std::vector<int> truth;
  for (size_t c = 0; c < centers.size(); ++c) {
    // spread 0.5 against a 12 m gap: separation far beyond 10x
    const auto b = blob(rng, centers[c], 0.5, 25);
    pts.insert(pts.end(), b.begin(), b.end());
    truth.insert(truth.end(), 25, static_cast<int>(c));
  }
  const ClusterLabeling lab = kmeans(pts, 4, 7);
  // same partition: each true cluster maps to exactly one label
  std::vector<int> seen(4, -1);
  for (size_t i = 0; i < pts.size(); ++i) {
    if (seen[truth[i]] < 0) seen[truth[i]] = lab.labels[i];
    CHECK(lab.labels[i] == seen[truth[i]]);
  }
  std::sort(seen.begin(), seen.end());
  for (int c = 0; c < 4; ++c) CHECK(seen[c] == c);
  for (size_t c = 0; c < centers.size(); ++c) {
    double best = 1e9;
    for (const Vec3& est : lab.centers) best = std::min(best, (est - centers[c]).norm());
    CHECK(best <= 0.5);
  }
}

TEST_CASE("kmeans is deterministic per seed and validates inputs") {
  Rng rng(79);
  const std::vector<Vec3> pts = blob(rng, Vec3::Zero(), 2.0, 50);
  const ClusterLabeling a = kmeans(pts, 5, 99);
  const ClusterLabeling b = kmeans(pts, 5, 99);
  CHECK(a.labels == b.labels);
  CHECK(a.inertia == doctest::Approx(b.inertia));

  CHECK_THROWS_AS(kmeans(pts, 0, 1), InvalidInput);
  CHECK_THROWS_AS(kmeans(std::vector<Vec3>(3, Vec3::Zero()), 5, 1), TooFewPoints);
}

TEST_CASE("chamfer distance fixtures") {
  const std::vector<Vec3> a = {Vec3(0, 0, 0)};
  const std::vector<Vec3> b = {Vec3(3, 0, 0)};
  CHECK(chamfer_distance(a, b) == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(chamfer_distance(a, a) == doctest::Approx(0.0));

  const std::vector<Vec3> c = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
  const std::vector<Vec3> d = {Vec3(0, 1, 0)};
  // a->b: (1 + sqrt(2))/2, b->a: 1
  CHECK(chamfer_distance(c, d) ==
        doctest::Approx(0.5 * (1.0 + std::sqrt(2.0)) + 1.0).epsilon(1e-12));
  CHECK(chamfer_distance(c, d) == doctest::Approx(chamfer_distance(d, c)));
  CHECK_THROWS_AS(chamfer_distance({}, b), EmptySet);
}

TEST_CASE("cluster matching undoes a permutation") {
  Rng rng(83);
  const std::vector<Vec3> centers = {Vec3(0, 0, 0), Vec3(8, 0, 0), Vec3(0, 8, 0)};
  std::vector<Vec3> pts_t, pts_t1;
  ClusterLabeling lab_t, lab_t1;
  const int per = 15;
  const std::vector<int> perm = {2, 0, 1};  // cluster c becomes index perm[c]
  for (int c = 0; c < 3; ++c) {
    const auto b0 = blob(rng, centers[c], 0.3, per);
    pts_t.insert(pts_t.end(), b0.begin(), b0.end());
    lab_t.labels.insert(lab_t.labels.end(), per, c);
  }
  lab_t.centers = centers;
  // frame t1: same blobs slightly moved, labeled under the permutation
  std::vector<std::vector<Vec3>> groups(3);
  for (int c = 0; c < 3; ++c) groups[perm[c]] = blob(rng, centers[c] + Vec3(0.1, 0, 0), 0.3, per);
  lab_t1.centers.resize(3);
  for (int g = 0; g < 3; ++g) {
    pts_t1.insert(pts_t1.end(), groups[g].begin(), groups[g].end());
    lab_t1.labels.insert(lab_t1.labels.end(), per, g);
    Vec3 m = Vec3::Zero();
    for (const Vec3& p : groups[g]) m += p;
    lab_t1.centers[g] = m / per;
  }
  const std::vector<int> match = match_clusters(lab_t, pts_t, lab_t1, pts_t1);
  REQUIRE(match.size() == 3);
  for (int c = 0; c < 3; ++c) CHECK(match[c] == perm[c]);
}

TEST_CASE("label propagation keeps indices aligned with frame 0") {
  Rng rng(89);
  const std::vector<Vec3> centers = {Vec3(0, 0, 0), Vec3(6, 0, 0)};
  std::vector<std::vector<Vec3>> frames;
  for (int f = 0; f < 4; ++f) {
    std::vector<Vec3> pts;
    for (const Vec3& c : centers) {
      const auto b = blob(rng, c + f * Vec3(0.05, 0.02, 0), 0.3, 12);
      pts.insert(pts.end(), b.begin(), b.end());
    }
    frames.push_back(pts);
  }
  const std::vector<ClusterLabeling> labs = propagate_labels(frames, 2, 5);
  REQUIRE(labs.size() == 4);
  // the blob around each drifted center keeps frame 0's cluster index
  for (int f = 0; f < 4; ++f) {
    for (int i = 0; i < 12; ++i) CHECK(labs[f].labels[i] == labs[0].labels[0]);
    for (int i = 12; i < 24; ++i) CHECK(labs[f].labels[i] == labs[0].labels[12]);
  }
}

TEST_CASE("one-hot encoding and range checks") {
  const SoftAssignment w = to_one_hot({0, 2, 1}, 3);
  REQUIRE(w.size() == 3);
  REQUIRE(w.num_classes() == 3);
  CHECK(w.weights(0, 0) == doctest::Approx(1.0));
  CHECK(w.weights(1, 2) == doctest::Approx(1.0));
  CHECK(w.weights(2, 1) == doctest::Approx(1.0));
  CHECK(w.weights.sum() == doctest::Approx(3.0));
  CHECK(w.is_one_hot());
  CHECK_THROWS_AS(to_one_hot({3}, 3), LabelOutOfRange);
  CHECK_THROWS_AS(to_one_hot({-1}, 3), LabelOutOfRange);
}

TEST_CASE("median center and background mask") {
  const std::vector<Vec3> pts = {Vec3(0, 0, 1), Vec3(1, 2, 1), Vec3(2, 4, 3),
                                 Vec3(100, -50, 1)};
  // even count: the upper median per coordinate
  const Vec3 m = median_center(pts);
  CHECK(m.x() == doctest::Approx(2.0));
  CHECK(m.y() == doctest::Approx(2.0));
  CHECK(m.z() == doctest::Approx(1.0));
  CHECK_THROWS_AS(median_center({}), EmptyCloud);

  BackgroundFilterConfig cfg;
  std::vector<Vec3> cloud = {Vec3(0, 0, 1.0),   // body
                             Vec3(0.2, 0, 0.05),  // ground
                             Vec3(5, 0, 1.0)};  // far clutter
  const std::vector<char> mask = background_mask(cloud, cfg);
  REQUIRE(mask.size() == 3);
  CHECK(mask[0] == 0);
  CHECK(mask[1] == 1);
  CHECK(mask[2] == 1);
}

TEST_CASE("template placement stands the body at the cloud center facing the sensor") {
  const CapsuleBody body = default_body();
  const Vec3 center(6, 8, 0.9);
  const Vec3 sensor(0, 0, 2);
  const RigidTransform g = template_placement(body, center, sensor);
  const Vec3 pelvis = g.apply(body.rest_positions[0]);
  CHECK(pelvis.x() == doctest::Approx(center.x()).epsilon(1e-9));
  CHECK(pelvis.y() == doctest::Approx(center.y()).epsilon(1e-9));
  // grounded: pelvis keeps its rest height, not the cloud's z
  CHECK(pelvis.z() == doctest::Approx(body.rest_positions[0].z()).epsilon(1e-9));
  // +x axis turned toward the sensor
  const Vec3 facing = g.rotation * Vec3(1, 0, 0);
  const Vec3 to_sensor = (Vec3(sensor.x(), sensor.y(), 0) - Vec3(center.x(), center.y(), 0)).normalized();
  CHECK(facing.dot(to_sensor) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("cluster to class mapping picks the owning limb") {
  const CapsuleBody body = default_body();
  const Vec3 sensor(0, 0, 2);
  const Vec3 center(5, 0, 0.9);
  const RigidTransform g = template_placement(body, center, sensor);

  // clusters dead on two limb midpoints map to those limbs' classes
  const Limb spine = body.topology.limbs[0];
  const Vec3 spine_mid = g.apply(
      0.5 * (body.rest_positions[spine.parent] + body.rest_positions[spine.child]));
  const Limb head = body.topology.limbs[1];
  const Vec3 head_mid = g.apply(
      0.5 * (body.rest_positions[head.parent] + body.rest_positions[head.child]));
  const std::vector<int> two =
      map_clusters_to_classes({spine_mid, head_mid}, center, body, sensor);
  REQUIRE(two.size() == 2);
  CHECK(two[0] == body.topology.limb_class(0));
  CHECK(two[1] == body.topology.limb_class(1));

  // more clusters than classes: the leftover far cluster becomes background
  std::vector<Vec3> crowded;
  for (int l = 0; l < body.topology.limb_count(); ++l) {
    const Limb& limb = body.topology.limbs[l];
    crowded.push_back(g.apply(
        0.5 * (body.rest_positions[limb.parent] + body.rest_positions[limb.child])));
  }
  crowded.push_back(g.apply(body.rest_positions[body.root]));
  crowded.push_back(center + Vec3(0, 30, 0));
  const std::vector<int> classes =
      map_clusters_to_classes(crowded, center, body, sensor);
  REQUIRE(classes.size() == crowded.size());
  for (int l = 0; l < body.topology.limb_count(); ++l)
    CHECK(classes[l] == body.topology.limb_class(l));
  CHECK(classes[body.topology.limb_count()] == body.root);
  CHECK(classes.back() == body.topology.background_class());
}

TEST_CASE("segment sequence produces valid assignments on synthetic frames") {
  SequenceConfig cfg;
  cfg.frames = 2;
  cfg.raycaster.azimuth_steps = 700;
  cfg.raycaster.beams = 40;
  const SequenceRecord rec = generate_sequence(default_body(), cfg, 33);
  std::vector<const PointCloud*> clouds;
  for (const FrameRecord& fr : rec.frames) clouds.push_back(&fr.cloud);

  const Vec3 sensor = cfg.raycaster.origin;
  BackgroundFilterConfig bg;
  const std::vector<SoftAssignment> w =
      segment_sequence(clouds, 8, 17, rec.body, sensor, bg);
  REQUIRE(w.size() == 2);
  for (int f = 0; f < 2; ++f) {
    REQUIRE(w[f].size() == rec.frames[f].cloud.size());
    REQUIRE(w[f].num_classes() == rec.body.topology.num_classes());
    w[f].validate();
    CHECK(w[f].is_one_hot());
    // most of a clean body cloud should land on real part classes
    const std::vector<int> labels = w[f].argmax_labels();
    int fg = 0;
    for (int lab : labels)
      if (lab != rec.body.topology.background_class()) ++fg;
    CHECK(fg > w[f].size() / 2);
  }

  PointCloud tiny;
  tiny.points = {Vec3(0, 0, 1), Vec3(0.1, 0, 1)};
  std::vector<const PointCloud*> one = {&tiny};
  CHECK_THROWS_AS(segment_sequence(one, 8, 17, rec.body, sensor, bg), TooFewPoints);
}

}  // TEST_SUITE
