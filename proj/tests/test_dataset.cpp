#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <set>

#include "grd/dataset.hpp"
#include "grd/errors.hpp"
#include "grd/io_util.hpp"

using namespace grd;

namespace {

GenerationConfig small_config(std::uint64_t n = 64, int workers = 1) {
    GenerationConfig cfg;
    cfg.trajectories = n;
    cfg.max_links = 3;
    cfg.n_steps = 20;
    cfg.dt = 0.1;
    cfg.workers = workers;
    return cfg;
}

std::filesystem::path temp_path(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_SUITE_BEGIN("dataset");

TEST_CASE("generated trajectories respect the sampling ranges and the cap") {
    RngStream rng(808);
    for (int rep = 0; rep < 300; ++rep) {
        auto [model, traj] = generate_trajectory(rng, 3, 10, 0.1);
        CHECK(traj.dimension == model.dimension);
        CHECK(traj.steps() == 10);
        CHECK(traj.states.size() == 11);
        for (int j = 0; j < traj.dimension; ++j) {
            CHECK(traj.states[0].q[j] >= -M_PI);
            CHECK(traj.states[0].q[j] <= M_PI);
            CHECK(traj.states[0].qdot[j] >= -1.0);
            CHECK(traj.states[0].qdot[j] <= 1.0);
        }
        for (const auto& tau : traj.torques) {
            CHECK(tau.minCoeff() >= ParamRanges::kTorqueMin);
            CHECK(tau.maxCoeff() <= ParamRanges::kTorqueMax);
        }
        for (const auto& s : traj.states) CHECK(s.qdot.cwiseAbs().maxCoeff() <= kVelocityCap);
    }
}

TEST_CASE("trajectory duration follows steps times dt") {
    RngStream rng(11);
    auto [model, traj] = generate_trajectory(rng, 2, 50, 0.1);
    CHECK(traj.steps() == 50);
    CHECK(traj.steps() * traj.dt == doctest::Approx(5.0));
}

TEST_CASE("dataset generation is byte-identical across worker counts") {
    const TrajectoryDataset a = generate_dataset(small_config(48, 1), 2025);
    const TrajectoryDataset b = generate_dataset(small_config(48, 4), 2025);
    const auto pa = temp_path("grd_ds_w1.bin");
    const auto pb = temp_path("grd_ds_w4.bin");
    write_dataset(a, pa.string());
    write_dataset(b, pb.string());
    CHECK(read_file(pa.string()) == read_file(pb.string()));
    std::filesystem::remove(pa);
    std::filesystem::remove(pb);
}

TEST_CASE("dimension mix is roughly uniform over {1, 2, 3}") {
    GenerationConfig cfg = small_config(3000);
    cfg.n_steps = 5;
    const TrajectoryDataset ds = generate_dataset(cfg, 17);
    std::array<int, 3> counts{};
    for (const auto& rec : ds.records) counts[rec.model.dimension - 1]++;
    for (int c : counts) CHECK(std::abs(c - 1000) < 110);  // ~4 sigma of the multinomial draw
}

TEST_CASE("serialization round trip is lossless") {
    const TrajectoryDataset ds = generate_dataset(small_config(32), 99);
    const auto path = temp_path("grd_ds_rt.bin");
    write_dataset(ds, path.string());
    const TrajectoryDataset back = read_dataset(path.string());

    REQUIRE(back.records.size() == ds.records.size());
    CHECK(back.max_dim == ds.max_dim);
    CHECK(back.n_steps == ds.n_steps);
    CHECK(back.dt == ds.dt);
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        const auto& x = ds.records[i];
        const auto& y = back.records[i];
        REQUIRE(y.model.dimension == x.model.dimension);
        for (int j = 0; j < x.model.dimension; ++j) {
            CHECK(y.model.axes[j] == x.model.axes[j]);
            CHECK(y.model.links[j].mass == x.model.links[j].mass);
            CHECK(y.model.links[j].friction_coeff == x.model.links[j].friction_coeff);
        }
        for (std::size_t t = 0; t < x.trajectory.states.size(); ++t) {
            CHECK(y.trajectory.states[t].q == x.trajectory.states[t].q);
            CHECK(y.trajectory.states[t].qdot == x.trajectory.states[t].qdot);
        }
        for (int t = 0; t < x.trajectory.steps(); ++t)
            CHECK(y.trajectory.torques[t] == x.trajectory.torques[t]);
    }
    std::filesystem::remove(path);
}

TEST_CASE("empty dataset round-trips") {
    TrajectoryDataset ds;
    ds.max_dim = 3;
    ds.n_steps = 50;
    ds.dt = 0.1;
    const auto path = temp_path("grd_ds_empty.bin");
    write_dataset(ds, path.string());
    const TrajectoryDataset back = read_dataset(path.string());
    CHECK(back.records.empty());
    CHECK(back.max_dim == 3);
    std::filesystem::remove(path);
}

TEST_CASE("corruption and truncation are detected") {
    const TrajectoryDataset ds = generate_dataset(small_config(8), 5);
    const auto path = temp_path("grd_ds_bad.bin");
    write_dataset(ds, path.string());
    std::vector<std::uint8_t> bytes = read_file(path.string());

    // Single bit flip in the middle trips the checksum.
    std::vector<std::uint8_t> flipped = bytes;
    flipped[flipped.size() / 2] ^= 0x10;
    write_file(path.string(), flipped);
    CHECK_THROWS_AS(read_dataset(path.string()), FormatError);

    // Truncation inside a record names the failing record index.
    std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + bytes.size() / 2);
    const std::size_t body = truncated.size();
    std::uint32_t crc = crc32_of(truncated.data(), body);
    truncated.insert(truncated.end(), reinterpret_cast<std::uint8_t*>(&crc),
                     reinterpret_cast<std::uint8_t*>(&crc) + 4);
    write_file(path.string(), truncated);
    try {
        read_dataset(path.string());
        CHECK(false);
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("record ") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("split is a deterministic partition") {
    const TrajectoryDataset ds = generate_dataset(small_config(100), 77);
    auto [train, test] = split_dataset(ds, 0.9, 3);
    CHECK(train.records.size() == 90);
    CHECK(test.records.size() == 10);

    auto key = [](const DatasetRecord& r) {
        return std::make_pair(r.trajectory.states[0].q[0], r.model.links[0].mass);
    };
    std::set<std::pair<double, double>> all, seen;
    for (const auto& r : ds.records) all.insert(key(r));
    for (const auto& r : train.records) seen.insert(key(r));
    for (const auto& r : test.records) seen.insert(key(r));
    CHECK(seen == all);

    auto [train2, test2] = split_dataset(ds, 0.9, 3);
    for (std::size_t i = 0; i < train.records.size(); ++i)
        CHECK(train.records[i].trajectory.states[0].q == train2.records[i].trajectory.states[0].q);

    CHECK_THROWS_AS(split_dataset(ds, 0.0, 1), InvalidConfig);
    CHECK_THROWS_AS(split_dataset(ds, 1.0, 1), InvalidConfig);
}

TEST_CASE("normalization gives zero mean and unit variance on its own split") {
    const TrajectoryDataset ds = generate_dataset(small_config(200), 123);
    const NormStats stats = compute_normalization(ds);
    REQUIRE(stats.features() == 9);

    // Re-accumulate normalized real entries.
    std::vector<double> sum(9, 0.0), sumsq(9, 0.0);
    std::vector<std::uint64_t> count(9, 0);
    for (const auto& rec : ds.records) {
        PaddedTrajectory rows = to_padded_rows(rec.trajectory, ds.max_dim);
        normalize_rows(rows, stats);
        for (int t = 0; t < rows.input.rows; ++t)
            for (int j = 0; j < rec.trajectory.dimension; ++j)
                for (int blk = 0; blk < 3; ++blk) {
                    const int f = blk * 3 + j;
                    sum[f] += rows.input.at(t, f);
                    sumsq[f] += rows.input.at(t, f) * rows.input.at(t, f);
                    count[f]++;
                }
    }
    for (int f = 0; f < 9; ++f) {
        REQUIRE(count[f] > 0);
        CHECK(std::abs(sum[f] / count[f]) < 1e-6);
        CHECK(std::abs(sumsq[f] / count[f] - 1.0) < 1e-6);
    }

    TrajectoryDataset empty;
    empty.max_dim = 3;
    CHECK_THROWS_AS(compute_normalization(empty), EmptyDataset);
}

TEST_CASE("a constant feature normalizes to zero with the floored deviation") {
    // All-equal torques on a single record make the torque feature constant.
    TrajectoryDataset ds;
    ds.max_dim = 1;
    ds.n_steps = 3;
    ds.dt = 0.1;
    DatasetRecord rec;
    rec.model = model_from_json(model_to_json(RobotModel{
        1, {JointAxis::PlusY}, {LinkParams{}}, Eigen::Vector3d(0, 0, -9.81)}));
    Trajectory traj;
    traj.dimension = 1;
    traj.dt = 0.1;
    for (int t = 0; t < 4; ++t) {
        JointState s{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)};
        s.q[0] = 0.5 * t;
        traj.states.push_back(s);
    }
    for (int t = 0; t < 3; ++t) traj.torques.push_back(Eigen::VectorXd::Constant(1, 2.5));
    rec.trajectory = traj;
    ds.records.push_back(rec);

    const NormStats stats = compute_normalization(ds);
    CHECK(stats.stdev[2] == NormStats::kStdFloor);
    PaddedTrajectory rows = to_padded_rows(traj, 1);
    normalize_rows(rows, stats);
    for (int t = 0; t < 3; ++t) CHECK(rows.input.at(t, 2) == 0.0);
}

TEST_CASE("padding layout zeroes the unused joint columns") {
    RngStream rng(6);
    auto [model, traj] = generate_trajectory(rng, 2, 8, 0.1, 2);
    const PaddedTrajectory rows = to_padded_rows(traj, 3);
    CHECK(rows.input.rows == 8);
    CHECK(rows.input.cols == 9);
    CHECK(rows.target.cols == 6);
    for (int t = 0; t < 8; ++t) {
        CHECK(rows.input.at(t, 2) == 0.0);
        CHECK(rows.input.at(t, 5) == 0.0);
        CHECK(rows.input.at(t, 8) == 0.0);
        CHECK(rows.target.at(t, 2) == 0.0);
        CHECK(rows.target.at(t, 5) == 0.0);
    }

    // Un-padding recovers the trajectory exactly.
    const Trajectory back = from_padded_rows(rows, traj.dt);
    for (std::size_t t = 0; t < traj.states.size(); ++t) {
        CHECK(back.states[t].q == traj.states[t].q);
        CHECK(back.states[t].qdot == traj.states[t].qdot);
    }
    for (int t = 0; t < traj.steps(); ++t) CHECK(back.torques[t] == traj.torques[t]);

    CHECK_THROWS_AS(to_padded_rows(traj, 1), DimensionMismatch);
}

TEST_SUITE_END();
