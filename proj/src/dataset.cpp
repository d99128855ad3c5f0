#include "grd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <thread>

#include "grd/errors.hpp"
#include "grd/io_util.hpp"

namespace grd {

namespace {

constexpr char kMagic[4] = {'G', 'R', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

Eigen::VectorXd draw_vector(RngStream& rng, int n, double lo, double hi) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
    return v;
}

bool within_cap(const JointState& s) {
    return s.qdot.allFinite() && s.q.allFinite() && s.qdot.cwiseAbs().maxCoeff() <= kVelocityCap;
}

}  // namespace

std::pair<RobotModel, Trajectory> generate_trajectory_with(
    RngStream& rng, const std::function<RobotModel(RngStream&)>& sampler, int n_steps, double dt) {
    if (n_steps < 1) throw InvalidConfig("trajectory needs at least one step");

    for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
        const RobotModel model = sampler(rng);
        const int d = model.dimension;

        JointState s1;
        s1.q = draw_vector(rng, d, ParamRanges::kInitPosMin, ParamRanges::kInitPosMax);
        s1.qdot = draw_vector(rng, d, ParamRanges::kInitVelMin, ParamRanges::kInitVelMax);

        std::vector<Eigen::VectorXd> torques(n_steps);
        for (int t = 0; t < n_steps; ++t)
            torques[t] = draw_vector(rng, d, ParamRanges::kTorqueMin, ParamRanges::kTorqueMax);

        Trajectory traj;
        traj.dimension = d;
        traj.dt = dt;
        traj.torques = torques;
        traj.states.reserve(n_steps + 1);
        traj.states.push_back(s1);

        bool ok = within_cap(s1);
        for (int t = 0; ok && t < n_steps; ++t) {
            try {
                traj.states.push_back(rk4_step(model, traj.states.back(), torques[t], dt));
            } catch (const NonFiniteState&) {
                ok = false;
                break;
            }
            ok = within_cap(traj.states.back());
        }
        if (ok) return {model, std::move(traj)};
    }
    throw RejectionOverflow(std::to_string(kMaxRejections) +
                            " consecutive trajectory rejections; check caps and step size");
}

std::pair<RobotModel, Trajectory> generate_trajectory(RngStream& rng, int max_links, int n_steps,
                                                      double dt,
                                                      std::optional<int> fixed_dimension) {
    if (max_links < 1) throw InvalidConfig("max_links must be >= 1");
    if (fixed_dimension && (*fixed_dimension < 1 || *fixed_dimension > max_links))
        throw InvalidConfig("fixed_dimension must lie in [1, max_links]");

    // The dimension is drawn once per record and kept across rejections.
    // Re-drawing it on every attempt would skew the accepted mix away from
    // uniform, because rejection rates grow with the link count.
    const int dimension = fixed_dimension
                              ? *fixed_dimension
                              : static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_links))) + 1;
    return generate_trajectory_with(
        rng, [dimension](RngStream& r) { return sample_robot_model(r, dimension, dimension); },
        n_steps, dt);
}

TrajectoryDataset generate_dataset(const GenerationConfig& config, std::uint64_t seed) {
    if (config.trajectories < 1) throw InvalidConfig("trajectory count must be >= 1");
    if (config.workers < 1) throw InvalidConfig("worker count must be >= 1");

    TrajectoryDataset ds;
    ds.max_dim = config.max_links;
    ds.n_steps = config.n_steps;
    ds.dt = config.dt;
    ds.records.resize(config.trajectories);

    auto worker = [&](std::uint64_t begin, std::uint64_t end) {
        for (std::uint64_t i = begin; i < end; ++i) {
            RngStream stream = RngStream::derive(seed, i);
            auto [model, traj] =
                config.model_sampler
                    ? generate_trajectory_with(stream, config.model_sampler, config.n_steps, config.dt)
                    : generate_trajectory(stream, config.max_links, config.n_steps, config.dt,
                                          config.fixed_dimension);
            ds.records[i] = {std::move(model), std::move(traj)};
        }
    };

    const int workers = static_cast<int>(
        std::min<std::uint64_t>(config.trajectories, static_cast<std::uint64_t>(config.workers)));
    if (workers <= 1) {
        worker(0, config.trajectories);
    } else {
        std::vector<std::thread> pool;
        const std::uint64_t chunk = (config.trajectories + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const std::uint64_t begin = w * chunk;
            const std::uint64_t end = std::min(config.trajectories, begin + chunk);
            if (begin < end) pool.emplace_back(worker, begin, end);
        }
        for (auto& t : pool) t.join();
    }
    return ds;
}

void write_dataset(const TrajectoryDataset& ds, const std::string& path) {
    ByteWriter w;
    w.bytes(kMagic, 4);
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(ds.max_dim));
    w.u64(ds.records.size());
    w.u32(static_cast<std::uint32_t>(ds.n_steps));
    w.f64(ds.dt);

    for (const DatasetRecord& rec : ds.records) {
        const int d = rec.model.dimension;
        const Trajectory& traj = rec.trajectory;
        if (traj.dimension != d || traj.steps() != ds.n_steps ||
            static_cast<int>(traj.states.size()) != ds.n_steps + 1)
            throw InvalidConfig("record shape does not match the dataset header");
        w.u32(static_cast<std::uint32_t>(d));
        for (JointAxis a : rec.model.axes) w.u8(static_cast<std::uint8_t>(a));
        for (const LinkParams& l : rec.model.links) {
            w.f64(l.mass);
            w.f64(l.com_offset);
            w.f64(l.length);
            w.f64(l.inertia_scale);
            w.f64(l.friction_coeff);
        }
        for (const JointState& s : traj.states) {
            for (int i = 0; i < d; ++i) w.f64(s.q[i]);
            for (int i = 0; i < d; ++i) w.f64(s.qdot[i]);
        }
        for (const Eigen::VectorXd& tau : traj.torques)
            for (int i = 0; i < d; ++i) w.f64(tau[i]);
    }

    w.u32(crc32_of(w.data().data(), w.data().size()));
    write_file(path, w.data());
}

TrajectoryDataset read_dataset(const std::string& path) {
    const std::vector<std::uint8_t> bytes = read_file(path);
    if (bytes.size() < 4 + 4 + 4 + 8 + 4 + 8 + 4) throw FormatError("dataset file too small: " + path);

    const std::size_t body = bytes.size() - 4;
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, bytes.data() + body, 4);
    if (crc32_of(bytes.data(), body) != stored_crc)
        throw FormatError("dataset checksum mismatch in " + path);

    ByteReader r(bytes.data(), body);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad dataset magic in " + path);
    if (r.u32() != kVersion) throw FormatError("unsupported dataset version in " + path);

    TrajectoryDataset ds;
    ds.max_dim = static_cast<int>(r.u32());
    const std::uint64_t count = r.u64();
    ds.n_steps = static_cast<int>(r.u32());
    ds.dt = r.f64();
    ds.records.reserve(count);

    for (std::uint64_t i = 0; i < count; ++i) {
        try {
            DatasetRecord rec;
            const int d = static_cast<int>(r.u32());
            if (d < 1 || d > ds.max_dim) throw FormatError("dimension out of range");
            rec.model.dimension = d;
            for (int j = 0; j < d; ++j) {
                const std::uint8_t code = r.u8();
                if (code > 5) throw FormatError("bad axis code");
                rec.model.axes.push_back(static_cast<JointAxis>(code));
            }
            for (int j = 0; j < d; ++j) {
                LinkParams l;
                l.mass = r.f64();
                l.com_offset = r.f64();
                l.length = r.f64();
                l.inertia_scale = r.f64();
                l.friction_coeff = r.f64();
                rec.model.links.push_back(l);
            }
            Trajectory& traj = rec.trajectory;
            traj.dimension = d;
            traj.dt = ds.dt;
            traj.states.resize(ds.n_steps + 1);
            for (JointState& s : traj.states) {
                s.q.resize(d);
                s.qdot.resize(d);
                for (int j = 0; j < d; ++j) s.q[j] = r.f64();
                for (int j = 0; j < d; ++j) s.qdot[j] = r.f64();
            }
            traj.torques.resize(ds.n_steps);
            for (Eigen::VectorXd& tau : traj.torques) {
                tau.resize(d);
                for (int j = 0; j < d; ++j) tau[j] = r.f64();
            }
            ds.records.push_back(std::move(rec));
        } catch (const FormatError& e) {
            throw FormatError("record " + std::to_string(i) + " of " + path + ": " + e.what());
        }
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes after the last record in " + path);
    return ds;
}

std::pair<TrajectoryDataset, TrajectoryDataset> split_dataset(const TrajectoryDataset& ds,
                                                              double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidConfig("split ratio must lie in (0, 1)");

    std::vector<std::size_t> order(ds.records.size());
    std::iota(order.begin(), order.end(), 0);
    RngStream rng = RngStream::derive(seed, 0);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.uniform_int(i)]);

    const std::size_t train_count =
        static_cast<std::size_t>(std::llround(ratio * static_cast<double>(ds.records.size())));

    TrajectoryDataset train, test;
    for (TrajectoryDataset* part : {&train, &test}) {
        part->max_dim = ds.max_dim;
        part->n_steps = ds.n_steps;
        part->dt = ds.dt;
    }
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < train_count ? train : test).records.push_back(ds.records[order[i]]);
    return {std::move(train), std::move(test)};
}

NormStats compute_normalization(const TrajectoryDataset& train) {
    if (train.records.empty()) throw EmptyDataset("normalization needs a non-empty training split");

    const int o = train.max_dim;
    NormStats stats;
    stats.max_dim = o;
    stats.mean.assign(3 * o, 0.0);
    stats.stdev.assign(3 * o, 0.0);

    std::vector<double> sum(3 * o, 0.0), sumsq(3 * o, 0.0);
    std::vector<std::uint64_t> count(3 * o, 0);
    for (const DatasetRecord& rec : train.records) {
        const Trajectory& traj = rec.trajectory;
        const int d = traj.dimension;
        for (int t = 0; t < traj.steps(); ++t) {
            for (int j = 0; j < d; ++j) {
                const double vals[3] = {traj.states[t].q[j], traj.states[t].qdot[j],
                                        traj.torques[t][j]};
                for (int blk = 0; blk < 3; ++blk) {
                    const int f = blk * o + j;
                    sum[f] += vals[blk];
                    sumsq[f] += vals[blk] * vals[blk];
                    count[f]++;
                }
            }
        }
    }
    for (int f = 0; f < 3 * o; ++f) {
        if (count[f] == 0) {
            // No robot in the split reaches this joint; keep the identity map.
            stats.mean[f] = 0.0;
            stats.stdev[f] = 1.0;
            continue;
        }
        stats.mean[f] = sum[f] / static_cast<double>(count[f]);
        const double var = std::max(0.0, sumsq[f] / static_cast<double>(count[f]) -
                                             stats.mean[f] * stats.mean[f]);
        stats.stdev[f] = std::max(std::sqrt(var), NormStats::kStdFloor);
    }
    return stats;
}

PaddedTrajectory to_padded_rows(const Trajectory& traj, int max_dim) {
    if (traj.dimension > max_dim)
        throw DimensionMismatch("trajectory dimension " + std::to_string(traj.dimension) +
                                " exceeds max_dim " + std::to_string(max_dim));
    const int n = traj.steps();
    const int d = traj.dimension;
    PaddedTrajectory out;
    out.dimension = d;
    out.max_dim = max_dim;
    out.input = Tensor2(n, 3 * max_dim);
    out.target = Tensor2(n, 2 * max_dim);
    for (int t = 0; t < n; ++t) {
        for (int j = 0; j < d; ++j) {
            out.input.at(t, j) = traj.states[t].q[j];
            out.input.at(t, max_dim + j) = traj.states[t].qdot[j];
            out.input.at(t, 2 * max_dim + j) = traj.torques[t][j];
            out.target.at(t, j) = traj.states[t + 1].q[j];
            out.target.at(t, max_dim + j) = traj.states[t + 1].qdot[j];
        }
    }
    return out;
}

Trajectory from_padded_rows(const PaddedTrajectory& padded, double dt) {
    const int n = padded.input.rows;
    const int d = padded.dimension;
    const int o = padded.max_dim;
    Trajectory traj;
    traj.dimension = d;
    traj.dt = dt;
    traj.states.resize(n + 1);
    traj.torques.resize(n);
    for (int t = 0; t < n; ++t) {
        traj.states[t].q.resize(d);
        traj.states[t].qdot.resize(d);
        traj.torques[t].resize(d);
        for (int j = 0; j < d; ++j) {
            traj.states[t].q[j] = padded.input.at(t, j);
            traj.states[t].qdot[j] = padded.input.at(t, o + j);
            traj.torques[t][j] = padded.input.at(t, 2 * o + j);
        }
    }
    traj.states[n].q.resize(d);
    traj.states[n].qdot.resize(d);
    for (int j = 0; j < d; ++j) {
        traj.states[n].q[j] = padded.target.at(n - 1, j);
        traj.states[n].qdot[j] = padded.target.at(n - 1, o + j);
    }
    return traj;
}

void normalize_rows(PaddedTrajectory& padded, const NormStats& stats) {
    if (stats.max_dim != padded.max_dim)
        throw DimensionMismatch("normalization stats were computed for max_dim " +
                                std::to_string(stats.max_dim));
    const int o = padded.max_dim;
    for (int t = 0; t < padded.input.rows; ++t) {
        for (int j = 0; j < padded.dimension; ++j) {
            for (int blk = 0; blk < 3; ++blk) {
                const int f = blk * o + j;
                padded.input.at(t, f) = (padded.input.at(t, f) - stats.mean[f]) / stats.stdev[f];
            }
            for (int blk = 0; blk < 2; ++blk) {
                const int f = blk * o + j;
                padded.target.at(t, f) = (padded.target.at(t, f) - stats.mean[f]) / stats.stdev[f];
            }
        }
    }
}

}  // namespace grd
