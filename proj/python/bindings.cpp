#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "lr/bench.hpp"
#include "lr/cli.hpp"
#include "lr/dataset.hpp"
#include "lr/ddpg.hpp"
#include "lr/error.hpp"
#include "lr/lr.hpp"
#include "lr/support_gan.hpp"

namespace py = pybind11;
using namespace lr;

namespace {

py::object to_py(const nlohmann::ordered_json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Least-restriction offline RL core";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<NonFiniteError>(m, "NonFiniteError", base.ptr());
  auto io_err = py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", io_err.ptr());

  py::enum_<EnvId>(m, "EnvId")
      .value("point_mass_1d", EnvId::point_mass_1d)
      .value("narrow_support_bandit", EnvId::narrow_support_bandit)
      .value("two_state_chain", EnvId::two_state_chain);
  py::enum_<BehaviorKind>(m, "BehaviorKind")
      .value("uniform_random", BehaviorKind::uniform_random)
      .value("suboptimal_pd", BehaviorKind::suboptimal_pd)
      .value("expert_pd", BehaviorKind::expert_pd);
  py::enum_<Fallback>(m, "Fallback").value("best_seen", Fallback::best_seen).value("dataset_nearest", Fallback::dataset_nearest);
  py::enum_<BaselineAlgo>(m, "BaselineAlgo")
      .value("naive_ddpg", BaselineAlgo::naive_ddpg)
      .value("behavior_clone", BaselineAlgo::behavior_clone);

  py::class_<MdpSpec>(m, "MdpSpec")
      .def_readonly("state_dim", &MdpSpec::state_dim)
      .def_readonly("action_dim", &MdpSpec::action_dim)
      .def_readonly("action_low", &MdpSpec::action_low)
      .def_readonly("action_high", &MdpSpec::action_high)
      .def_readonly("horizon_default", &MdpSpec::horizon_default)
      .def_readonly("reward_low", &MdpSpec::reward_low)
      .def_readonly("reward_high", &MdpSpec::reward_high);
  m.def("mdp_spec", &mdp_spec, py::return_value_policy::reference);

  py::class_<FixedDataset>(m, "FixedDataset")
      .def("__len__", &FixedDataset::size)
      .def_property_readonly("env", [](const FixedDataset& d) { return d.meta().env_id; })
      .def_property_readonly("behavior", [](const FixedDataset& d) { return d.meta().behavior; })
      .def_property_readonly("seed", [](const FixedDataset& d) { return d.meta().seed; })
      .def_property_readonly("s", [](const FixedDataset& d) { return Eigen::MatrixXd(d.all().s.transpose()); })
      .def_property_readonly("a", [](const FixedDataset& d) { return Eigen::MatrixXd(d.all().a.transpose()); })
      .def_property_readonly("r", [](const FixedDataset& d) { return d.all().r; })
      .def_property_readonly("s_next", [](const FixedDataset& d) { return Eigen::MatrixXd(d.all().s_next.transpose()); })
      .def_property_readonly("done", [](const FixedDataset& d) { return d.all().done; })
      .def("__eq__", [](const FixedDataset& a, const FixedDataset& b) { return a == b; });

  m.def(
      "generate_dataset",
      [](EnvId env, BehaviorKind kind, std::size_t n, std::uint64_t seed) {
        return generate_dataset(env, BehaviorPolicy::preset(kind, env), n, seed);
      },
      py::arg("env"), py::arg("behavior"), py::arg("n"), py::arg("seed"));
  m.def("write_dataset", &write_dataset, py::arg("path"), py::arg("dataset"));
  m.def("read_dataset", &read_dataset, py::arg("path"));
  m.def("encode_dataset", [](const FixedDataset& d) { return py::bytes(encode_dataset(d)); });
  m.def("decode_dataset", [](const py::bytes& b) { return decode_dataset(std::string(b)); });
  m.def("dataset_stats", [](const FixedDataset& d) { return to_py(to_json(dataset_stats(d))); });

  py::class_<GanConfig>(m, "GanConfig")
      .def(py::init<>())
      .def_readwrite("latent_dim", &GanConfig::latent_dim)
      .def_readwrite("gen_hidden", &GanConfig::gen_hidden)
      .def_readwrite("dis_hidden", &GanConfig::dis_hidden)
      .def_readwrite("lr", &GanConfig::lr)
      .def_readwrite("batch", &GanConfig::batch)
      .def_readwrite("steps", &GanConfig::steps)
      .def_readwrite("label_smoothing", &GanConfig::label_smoothing)
      .def_readwrite("box_negatives", &GanConfig::box_negatives);

  py::class_<SupportModel>(m, "SupportModel")
      .def_readonly("state_dim", &SupportModel::state_dim)
      .def_readonly("action_dim", &SupportModel::action_dim)
      .def_property_readonly("curve", [](const SupportModel& sm) {
        std::vector<std::tuple<std::size_t, double, double>> out;
        for (const auto& p : sm.curve) out.emplace_back(p.step, p.dis_loss, p.gen_loss);
        return out;
      });
  m.def("train_gan", &train_gan, py::arg("dataset"), py::arg("config"), py::arg("seed"));
  m.def("confidence", &confidence, py::arg("model"), py::arg("s"), py::arg("a"));
  m.def(
      "confidence_batch",
      [](const SupportModel& sm, const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) {
        return confidence_batch(sm, s.transpose(), a.transpose());
      },
      py::arg("model"), py::arg("s"), py::arg("a"), "Rows are records.");
  m.def("calibrate_threshold", &calibrate_threshold, py::arg("model"), py::arg("dataset"), py::arg("quantile"));
  m.def("auc_from_scores", &auc_from_scores, py::arg("in_scores"), py::arg("out_scores"));
  m.def("save_support_model", &save_support_model, py::arg("dir"), py::arg("model"));
  m.def("load_support_model", &load_support_model, py::arg("dir"));

  py::class_<DdpgConfig>(m, "DdpgConfig")
      .def(py::init<>())
      .def_readwrite("gamma", &DdpgConfig::gamma)
      .def_readwrite("tau", &DdpgConfig::tau)
      .def_readwrite("lr_actor", &DdpgConfig::lr_actor)
      .def_readwrite("lr_critic", &DdpgConfig::lr_critic)
      .def_readwrite("batch_n", &DdpgConfig::batch_n)
      .def_readwrite("total_steps", &DdpgConfig::total_steps)
      .def_readwrite("actor_hidden", &DdpgConfig::actor_hidden)
      .def_readwrite("critic_hidden", &DdpgConfig::critic_hidden)
      .def_readwrite("terminal_masking", &DdpgConfig::terminal_masking)
      .def_readwrite("metrics_every", &DdpgConfig::metrics_every);

  py::class_<LrConfig>(m, "LrConfig")
      .def(py::init<>())
      .def("set_threshold", [](LrConfig& c, double p) { c.p = ThresholdSpec::absolute(p); })
      .def("set_quantile", [](LrConfig& c, double q) { c.p = ThresholdSpec::quantile(q); })
      .def_readwrite("sigma", &LrConfig::sigma)
      .def_readwrite("k_max", &LrConfig::k_max)
      .def_readwrite("fallback", &LrConfig::fallback)
      .def_readwrite("constrain_actor", &LrConfig::constrain_actor);

  py::class_<ProjectionOutcome>(m, "ProjectionOutcome")
      .def_readonly("action", &ProjectionOutcome::action)
      .def_readonly("iterations_used", &ProjectionOutcome::iterations_used)
      .def_readonly("final_confidence", &ProjectionOutcome::final_confidence)
      .def_readonly("fallback_used", &ProjectionOutcome::fallback_used);
  m.def(
      "lr_project",
      [](const SupportModel& sm, const FixedDataset& d, const Eigen::VectorXd& s_next, const Eigen::VectorXd& a,
         const LrConfig& cfg, std::uint64_t seed) {
        const auto params = resolve_projection(cfg, sm, d);
        Rng rng(seed);
        return lr_project(sm, s_next, a, params, rng, &d);
      },
      py::arg("model"), py::arg("dataset"), py::arg("s_next"), py::arg("a"), py::arg("config"), py::arg("seed"));

  py::class_<DdpgAgent>(m, "DdpgAgent")
      .def_readonly("state_dim", &DdpgAgent::state_dim)
      .def_readonly("action_dim", &DdpgAgent::action_dim)
      .def("act", [](const DdpgAgent& a, const Eigen::VectorXd& s) { return policy_action(a, s, false); })
      .def("q", [](const DdpgAgent& a, const Eigen::MatrixXd& s, const Eigen::MatrixXd& act) {
        return critic_values(a, s.transpose(), act.transpose(), false);
      })
      .def("__eq__", [](const DdpgAgent& x, const DdpgAgent& y) { return x == y; });

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("agent", &TrainResult::agent)
      .def_readonly("threshold", &TrainResult::threshold)
      .def_property_readonly("metrics_csv", [](const TrainResult& r) { return metrics_csv(r.metrics); })
      .def_property_readonly("summary", [](const TrainResult& r) { return to_py(metrics_summary(r.metrics)); });
  m.def(
      "train_lr_ddpg",
      [](const FixedDataset& d, const SupportModel& sm, const DdpgConfig& dc, const LrConfig& lc, std::uint64_t seed) {
        py::gil_scoped_release release;
        return train_lr_ddpg(d, sm, dc, lc, seed);
      },
      py::arg("dataset"), py::arg("model"), py::arg("ddpg"), py::arg("lr"), py::arg("seed"));
  m.def(
      "train_baseline",
      [](const FixedDataset& d, BaselineAlgo algo, const DdpgConfig& dc, std::uint64_t seed) {
        py::gil_scoped_release release;
        return train_baseline(d, algo, dc, seed);
      },
      py::arg("dataset"), py::arg("algo"), py::arg("ddpg"), py::arg("seed"));

  m.def(
      "evaluate_agent",
      [](EnvId env, const DdpgAgent& agent, std::size_t episodes, int horizon, double gamma, std::uint64_t seed) {
        return to_py(to_json(evaluate_policy(env, actor_policy(agent), episodes, horizon, gamma, seed)));
      },
      py::arg("env"), py::arg("agent"), py::arg("episodes"), py::arg("horizon"), py::arg("gamma"), py::arg("seed"));
  m.def("q_bound", &q_bound, py::arg("gamma"), py::arg("reward_low"), py::arg("reward_high"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int status;
        {
          py::gil_scoped_release release;
          status = cli::dispatch(args, out, err);
        }
        return std::make_tuple(status, out.str(), err.str());
      },
      py::arg("args"), "Runs one lrctl command; returns (status, stdout, stderr).");
}
