// flowreg command-line front end.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <future>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flowreg/flowreg.hpp"

namespace fs = std::filesystem;
using namespace flowreg;

namespace {

std::mutex log_mutex;

void log_line(const std::string& line) {
  const std::lock_guard lock(log_mutex);
  std::cerr << line << '\n';
}

std::vector<PointCloud> load_guidance_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::InvalidArgument, "guidance path is not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string ext = io::lower_extension(entry.path());
    if (entry.is_regular_file() && (ext == ".ply" || ext == ".obj")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<PointCloud> frames;
  frames.reserve(files.size());
  for (const auto& f : files) frames.push_back(io::load_cloud(f));
  return frames;
}

struct RegisterJob {
  fs::path source;
  fs::path target;
  fs::path out;
  std::optional<fs::path> guidance;
};

void run_job(const RegisterJob& job, const RegistrationConfig& config, const std::optional<fs::path>& config_path,
             bool quiet) {
  const auto started = std::chrono::steady_clock::now();
  const TriMesh source = io::load_mesh(job.source);
  const TriMesh target = io::load_mesh(job.target);
  const std::vector<PointCloud> guidance = job.guidance ? load_guidance_dir(*job.guidance) : std::vector<PointCloud>{};
  const int every = std::max(1, config.iterations / 20);
  const std::string tag = job.out.string();
  ProgressCallback progress;
  if (!quiet) {
    progress = [&](int it, const LossBreakdown& loss) {
      if (it % every == 0 || it + 1 == config.iterations) {
        log_line("[" + tag + "] iter " + std::to_string(it) + " loss " + std::to_string(loss.total) + " cd_final " +
                 std::to_string(loss.cd_final));
      }
    };
  }
  const RegistrationResult result = run_registration(source, target, guidance, config, progress);

  io::save_obj(job.out / "registered.obj", result.registered);
  io::save_obj(job.out / "flow_output.obj", TriMesh{result.flow_output, source.triangles});
  io::save_correspondences(job.out / "correspondences.json", result.correspondences);
  io::save_checkpoint(job.out / "flow.json", io::FlowCheckpoint{result.field, config.t0, config.t1, result.normalization});
  auto history = result.history;
  history.push_back(result.final_loss);
  io::save_loss_csv(job.out / "loss.csv", history);

  io::RunManifest manifest;
  manifest.inputs["source"] = job.source.string();
  manifest.inputs["target"] = job.target.string();
  if (job.guidance) manifest.inputs["guidance"] = job.guidance->string();
  if (config_path) manifest.inputs["config"] = config_path->string();
  manifest.config = config;
  manifest.seed = config.seed;
  manifest.timing = result.stage_seconds;
  manifest.timing["total"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  io::write_json(job.out / "manifest.json", io::manifest_to_json(manifest));
  if (!quiet) log_line("[" + tag + "] done, final cd " + std::to_string(result.final_loss.cd_final));
}

std::vector<RegisterJob> load_batch(const fs::path& path) {
  const io::json j = io::read_json(path);
  return io::json_guard("batch manifest", [&] {
    std::vector<RegisterJob> jobs;
    const io::json& list = j.is_object() ? j.at("jobs") : j;
    for (const auto& item : list) {
      RegisterJob job{item.at("source").get<std::string>(), item.at("target").get<std::string>(),
                      item.at("out").get<std::string>(), std::nullopt};
      if (item.contains("guidance")) job.guidance = fs::path(item.at("guidance").get<std::string>());
      jobs.push_back(std::move(job));
    }
    return jobs;
  });
}

Point3 parse_vector(const std::vector<double>& v, const char* what) {
  if (v.size() != 3) throw Error(ErrorCode::InvalidArgument, std::string(what) + " needs three values");
  return Point3(v[0], v[1], v[2]);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flow-based non-rigid shape registration"};
  app.set_version_flag("--version", std::string(io::kVersion));
  app.require_subcommand(1);

  // register
  auto* reg = app.add_subcommand("register", "Register a source shape to a target shape");
  std::string reg_source, reg_target, reg_out, reg_guidance, reg_config, reg_batch;
  int reg_jobs = 1;
  bool reg_quiet = false;
  std::optional<int> o_iterations, o_steps, o_nicp, o_stride, o_knn, o_resolution;
  std::optional<double> o_lr, o_cd_inter, o_cd_final, o_arap;
  std::optional<std::uint64_t> o_seed;
  std::optional<std::size_t> o_fps;
  std::vector<int> o_hidden;
  reg->add_option("--source", reg_source, "Source mesh or cloud (OBJ/PLY)");
  reg->add_option("--target", reg_target, "Target mesh or cloud (OBJ/PLY)");
  reg->add_option("--out", reg_out, "Output directory");
  reg->add_option("--guidance", reg_guidance, "Directory of guidance frames (PLY/OBJ, lexicographic order)");
  reg->add_option("--config", reg_config, "JSON configuration file")->check(CLI::ExistingFile);
  reg->add_option("--batch", reg_batch, "JSON list of {source, target, out, guidance} jobs")->check(CLI::ExistingFile);
  reg->add_option("--jobs", reg_jobs, "Parallel jobs in batch mode")->check(CLI::PositiveNumber);
  reg->add_option("--iterations", o_iterations, "Training iterations");
  reg->add_option("--lr", o_lr, "Adam learning rate");
  reg->add_option("--ode-steps", o_steps, "RK4 steps over the flow interval");
  reg->add_option("--hidden", o_hidden, "Hidden layer widths")->delimiter(',');
  reg->add_option("--lambda-cd-inter", o_cd_inter, "Weight of the guidance Chamfer terms");
  reg->add_option("--lambda-cd-final", o_cd_final, "Weight of the final Chamfer term");
  reg->add_option("--lambda-arap", o_arap, "Weight of the ARAP term");
  reg->add_option("--nicp-iterations", o_nicp, "Non-rigid ICP iterations");
  reg->add_option("--guidance-stride", o_stride, "Keep every n-th guidance frame");
  reg->add_option("--fps-size", o_fps, "Guidance sample size (0 = source vertex count)");
  reg->add_option("--knn", o_knn, "Neighbors per point for point-cloud sources");
  reg->add_option("--surface-resolution", o_resolution, "Depth map resolution for guidance cleaning");
  reg->add_option("--seed", o_seed, "Random seed (overrides FLOWREG_SEED and the config file)");
  reg->add_flag("--quiet", reg_quiet, "Suppress progress output");

  // interpolate
  auto* interp = app.add_subcommand("interpolate", "Carry a mesh part of the way along a trained flow");
  std::string in_flow, in_source, in_out;
  double in_t = 0.0;
  int in_steps = 32;
  interp->add_option("--flow", in_flow, "Flow checkpoint (flow.json)")->required()->check(CLI::ExistingFile);
  interp->add_option("--source", in_source, "Source mesh")->required()->check(CLI::ExistingFile);
  interp->add_option("--t", in_t, "Fraction of the flow interval, 0 = source, 1 = target")->required()->check(CLI::Range(0.0, 1.0));
  interp->add_option("--steps", in_steps, "RK4 steps over the full interval")->check(CLI::PositiveNumber);
  interp->add_option("--out", in_out, "Output mesh")->required();

  // extract-surface
  auto* extract = app.add_subcommand("extract-surface", "Remove interior points by depth rendering");
  std::string ex_input, ex_out, ex_mode = "visible";
  SurfaceOptions ex_opts;
  std::optional<double> ex_outliers;
  extract->add_option("--input", ex_input, "Input point cloud")->required()->check(CLI::ExistingFile);
  extract->add_option("--out", ex_out, "Output point cloud")->required();
  extract->add_option("--resolution", ex_opts.resolution, "Depth map resolution")->check(CLI::PositiveNumber);
  extract->add_option("--splat-radius", ex_opts.splat_radius, "Splat radius in pixels (0 = from point spacing)");
  extract->add_option("--mode", ex_mode, "visible (input points) or pixels (unprojected)")
      ->check(CLI::IsMember({"visible", "pixels"}));
  extract->add_option("--remove-outliers", ex_outliers, "Outlier multiplier applied first");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Map-quality metrics as JSON on standard output");
  std::string ev_source, ev_target, ev_map, ev_reverse, ev_landmarks;
  eval->add_option("--source", ev_source, "Source mesh")->required()->check(CLI::ExistingFile);
  eval->add_option("--target", ev_target, "Target mesh")->required()->check(CLI::ExistingFile);
  eval->add_option("--map", ev_map, "Source-to-target correspondences JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--map-reverse", ev_reverse, "Target-to-source correspondences JSON")->check(CLI::ExistingFile);
  eval->add_option("--landmarks", ev_landmarks, "Landmark pairs file")->check(CLI::ExistingFile);

  // synth-guidance
  auto* synth = app.add_subcommand("synth-guidance", "Write synthetic guidance frames for a source shape");
  std::string sg_source, sg_target, sg_map, sg_out, sg_target_out, sg_kind = "bend";
  SyntheticDeformation sg_deform;
  std::vector<double> sg_vector;
  synth->add_option("--source", sg_source, "Source mesh")->required()->check(CLI::ExistingFile);
  synth->add_option("--target", sg_target, "Target mesh (default: deform the source)")->check(CLI::ExistingFile);
  synth->add_option("--map", sg_map, "Ground-truth correspondences JSON (default: identity)")->check(CLI::ExistingFile);
  synth->add_option("--deform", sg_kind, "translate, bend, twist or ellipsoid-morph")
      ->check(CLI::IsMember({"translate", "bend", "twist", "ellipsoid-morph"}));
  synth->add_option("--vector", sg_vector, "Offset (translate) or axis scales (ellipsoid-morph)")->delimiter(',');
  synth->add_option("--angle", sg_deform.angle, "Bend or twist angle in radians");
  synth->add_option("--frames", sg_deform.frames, "Frame count")->check(CLI::NonNegativeNumber);
  synth->add_option("--sigma", sg_deform.sigma, "Gaussian noise sigma")->check(CLI::NonNegativeNumber);
  synth->add_option("--interior", sg_deform.interior_fraction, "Interior point fraction")->check(CLI::Range(0.0, 0.999999));
  synth->add_option("--seed", sg_deform.seed, "Random seed");
  synth->add_option("--out", sg_out, "Output directory for frame_001.ply, frame_002.ply, ...")->required();
  synth->add_option("--target-out", sg_target_out, "Where to write the generated target (default: <out>_target.obj)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*reg) {
      if (reg_batch.empty() && (reg_source.empty() || reg_target.empty() || reg_out.empty())) {
        std::cerr << "register: --source, --target and --out are required (or --batch)\n";
        return 2;
      }
      RegistrationConfig config;
      std::optional<fs::path> config_path;
      if (!reg_config.empty()) {
        config_path = reg_config;
        config = io::load_config(reg_config);
      }
      if (const char* env = std::getenv("FLOWREG_SEED"); env && *env) {
        try {
          config.seed = std::stoull(env);
        } catch (const std::exception&) {
          std::cerr << "FLOWREG_SEED is not an unsigned integer: " << env << '\n';
          return 2;
        }
      }
      if (o_iterations) config.iterations = *o_iterations;
      if (o_lr) config.learning_rate = *o_lr;
      if (o_steps) config.ode_steps = *o_steps;
      if (!o_hidden.empty()) config.mlp_hidden = o_hidden;
      if (o_cd_inter) config.lambda_cd_inter = *o_cd_inter;
      if (o_cd_final) config.lambda_cd_final = *o_cd_final;
      if (o_arap) config.lambda_arap = *o_arap;
      if (o_nicp) config.nicp_iterations = *o_nicp;
      if (o_stride) config.guidance_stride = *o_stride;
      if (o_fps) config.fps_target_size = *o_fps;
      if (o_knn) config.knn = *o_knn;
      if (o_resolution) config.surface_resolution = *o_resolution;
      if (o_seed) config.seed = *o_seed;
      config.validate();

      std::vector<RegisterJob> jobs;
      if (!reg_batch.empty()) {
        jobs = load_batch(reg_batch);
      } else {
        RegisterJob job{reg_source, reg_target, reg_out, std::nullopt};
        if (!reg_guidance.empty()) job.guidance = fs::path(reg_guidance);
        jobs.push_back(std::move(job));
      }
      // Independent jobs; each worker pulls the next unclaimed index.
      std::atomic<std::size_t> next{0};
      std::vector<std::future<void>> workers;
      const auto count = std::min<std::size_t>(static_cast<std::size_t>(reg_jobs), jobs.size());
      for (std::size_t w = 0; w < count; ++w) {
        workers.push_back(std::async(std::launch::async, [&] {
          for (std::size_t i = next++; i < jobs.size(); i = next++) run_job(jobs[i], config, config_path, reg_quiet);
        }));
      }
      for (auto& w : workers) w.get();
      return 0;
    }

    if (*interp) {
      const io::FlowCheckpoint ckpt = io::load_checkpoint(in_flow);
      const TriMesh source = io::load_mesh(in_source);
      const TriMesh moved = interpolate_shape(ckpt.field, source, in_t, ckpt.ode(in_steps),
                                              ckpt.normalization.value_or(NormalizeTransform{}));
      io::save_mesh(in_out, moved);
      return 0;
    }

    if (*extract) {
      PointCloud cloud = io::load_cloud(ex_input);
      if (ex_outliers) cloud = remove_outliers(cloud, *ex_outliers);
      ex_opts.output = ex_mode == "pixels" ? SurfaceOutput::UnprojectedPixels : SurfaceOutput::VisibleInputPoints;
      const PointCloud surface = extract_surface_points(cloud, ex_opts);
      io::save_cloud(ex_out, surface);
      std::cerr << "kept " << surface.size() << " of " << cloud.size() << " points\n";
      return 0;
    }

    if (*eval) {
      const TriMesh source = io::load_mesh(ev_source);
      const TriMesh target = io::load_mesh(ev_target);
      const CorrespondenceMap forward = io::load_correspondences(ev_map);
      check_map(forward.map, source.vertices.size(), target.vertices.size());
      io::Metrics metrics;
      metrics.coverage = coverage(forward.map, target.vertices.size());
      if (source.has_faces()) metrics.dirichlet = dirichlet_energy(source, target, forward.map);
      if (!ev_landmarks.empty()) {
        metrics.landmark_errors = landmark_errors(forward.map, source, target, io::load_landmarks(ev_landmarks));
        double sum = 0.0;
        for (double e : metrics.landmark_errors) sum += e;
        metrics.landmark_error = sum / static_cast<double>(metrics.landmark_errors.size());
      }
      if (!ev_reverse.empty()) {
        const CorrespondenceMap reverse = io::load_correspondences(ev_reverse);
        metrics.bijectivity = bijectivity(forward.map, reverse.map, source.vertices, target.vertices);
      }
      std::cout << io::metrics_to_json(metrics).dump(2) << '\n';
      return 0;
    }

    if (*synth) {
      const TriMesh source = io::load_mesh(sg_source);
      sg_deform.kind = parse_deformation(sg_kind);
      if (!sg_vector.empty()) sg_deform.vector = parse_vector(sg_vector, "--vector");
      sg_deform.validate();
      TriMesh target;
      std::vector<std::size_t> map;
      if (!sg_target.empty()) {
        target = io::load_mesh(sg_target);
      } else {
        target = apply_deformation(source, sg_deform);
        // Kept outside the frame directory so it can be passed to --guidance as is.
        fs::path out_dir = fs::path(sg_out).lexically_normal();
        if (!out_dir.has_filename()) out_dir = out_dir.parent_path();
        const fs::path target_path = sg_target_out.empty() ? fs::path(out_dir.string() + "_target.obj") : fs::path(sg_target_out);
        io::save_obj(target_path, target);
      }
      if (!sg_map.empty()) {
        map = io::load_correspondences(sg_map).map;
      } else {
        if (source.vertices.size() != target.vertices.size()) {
          throw Error(ErrorCode::InvalidArgument, "identity correspondence needs equal vertex counts; pass --map");
        }
        map.resize(source.vertices.size());
        for (std::size_t i = 0; i < map.size(); ++i) map[i] = i;
      }
      const auto frames = synth_guidance(source, target, map, sg_deform);
      fs::create_directories(sg_out);
      for (std::size_t j = 0; j < frames.size(); ++j) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%03zu.ply", j + 1);
        io::save_cloud(fs::path(sg_out) / name, frames[j]);
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
