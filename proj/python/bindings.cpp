// Python access to the file formats and scoring shared with external tooling.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rsn/ablate.hpp"
#include "rsn/common.hpp"
#include "rsn/expert.hpp"
#include "rsn/neuron.hpp"
#include "rsn/probes.hpp"
#include "rsn/store.hpp"

namespace py = pybind11;
using namespace rsn;

namespace {

using NeuronTuple = std::tuple<std::string, std::uint32_t, std::uint32_t>;
using RankTuple = std::tuple<std::string, std::uint32_t, std::uint32_t, double>;

NeuronTuple to_tuple(const NeuronId& n) { return {to_string(n.kind), n.layer, n.column}; }
NeuronId from_tuple(const NeuronTuple& t) {
  return {neuron_kind_from_string(std::get<0>(t)), std::get<1>(t), std::get<2>(t)};
}

py::dict prompt_dict(const PromptInstance& p) {
  py::dict d;
  d["relation"] = p.relation;
  d["subject"] = p.subject;
  d["object"] = p.object;
  d["text"] = p.text;
  d["split"] = to_string(p.split);
  return d;
}

PromptInstance prompt_from_dict(const py::dict& d) {
  PromptInstance p;
  p.relation = d["relation"].cast<std::string>();
  p.subject = d["subject"].cast<std::string>();
  p.object = d["object"].cast<std::string>();
  p.text = d["text"].cast<std::string>();
  p.split = split_from_string(d["split"].cast<std::string>());
  return p;
}

std::vector<RankTuple> ranking_tuples(const NeuronRanking& r) {
  std::vector<RankTuple> out;
  for (const auto& e : r.entries) out.emplace_back(to_string(e.neuron.kind), e.neuron.layer, e.neuron.column, e.ap);
  return out;
}

NeuronRanking ranking_from_tuples(const std::string& target, const std::vector<RankTuple>& rows) {
  NeuronRanking r;
  r.target = target;
  for (const auto& [k, l, c, ap] : rows) r.entries.push_back({{neuron_kind_from_string(k), l, c}, ap});
  return r;
}

ActivationMatrix to_matrix(const std::vector<NeuronTuple>& neurons,
                           py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> labels,
                           py::array_t<float, py::array::c_style | py::array::forcecast> values) {
  if (labels.ndim() != 1 || values.ndim() != 2) throw ValidationError("labels must be 1-D and values 2-D");
  ActivationMatrix m;
  for (const auto& t : neurons) m.neurons.push_back(from_tuple(t));
  m.labels.assign(labels.data(), labels.data() + labels.shape(0));
  const auto J = values.shape(0), N = values.shape(1);
  if (static_cast<std::size_t>(J) != m.labels.size() || static_cast<std::size_t>(N) != m.neurons.size())
    throw ValidationError("values must have shape (len(labels), len(neurons))");
  m.values = MatT<float>(J, N);
  auto v = values.unchecked<2>();
  for (py::ssize_t i = 0; i < J; ++i)
    for (py::ssize_t j = 0; j < N; ++j) m.values(i, j) = v(i, j);
  return m;
}

py::tuple from_matrix(const ActivationMatrix& m) {
  std::vector<NeuronTuple> neurons;
  for (const auto& n : m.neurons) neurons.push_back(to_tuple(n));
  py::array_t<std::uint8_t> labels(static_cast<py::ssize_t>(m.labels.size()));
  std::copy(m.labels.begin(), m.labels.end(), labels.mutable_data());
  const auto J = m.values.rows(), N = m.values.cols();
  py::array_t<float> values({static_cast<py::ssize_t>(J), static_cast<py::ssize_t>(N)});
  auto v = values.mutable_unchecked<2>();
  for (Eigen::Index i = 0; i < J; ++i)
    for (Eigen::Index j = 0; j < N; ++j) v(i, j) = m.values(i, j);
  return py::make_tuple(neurons, labels, values);
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
  mod.doc() = "Relation-neuron lab: formats, scoring and evaluation";

  py::register_exception<ValidationError>(mod, "ValidationError", PyExc_ValueError);
  py::register_exception<IoError>(mod, "IoError", PyExc_OSError);

  mod.def(
      "average_precision",
      [](const std::vector<float>& scores, const std::vector<std::uint8_t>& labels) {
        return average_precision(scores, labels);
      },
      py::arg("scores"), py::arg("labels"));

  mod.def(
      "neuron_count",
      [](std::uint32_t n_layers, std::uint32_t d_model, std::uint32_t d_ff, const std::string& kinds) {
        ModelConfig c;
        c.n_layers = n_layers;
        c.d_model = d_model;
        c.d_ff = d_ff;
        return neuron_count(c, KindSet::parse(kinds));
      },
      py::arg("n_layers"), py::arg("d_model"), py::arg("d_ff"), py::arg("kinds") = "ffn");

  mod.def(
      "read_activations", [](const std::filesystem::path& p) { return from_matrix(read_activation_file(p)); },
      py::arg("path"), "(neurons, labels, values) from an RSNACT01 file");
  mod.def(
      "write_activations",
      [](const std::filesystem::path& p, const std::vector<NeuronTuple>& neurons,
         py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> labels,
         py::array_t<float, py::array::c_style | py::array::forcecast> values) {
        write_activation_file(p, to_matrix(neurons, labels, values));
      },
      py::arg("path"), py::arg("neurons"), py::arg("labels"), py::arg("values"));

  mod.def(
      "score",
      [](const std::filesystem::path& activations, const std::string& target, std::size_t threads) {
        return ranking_tuples(score_all(read_activation_file(activations), target, threads));
      },
      py::arg("activations"), py::arg("target") = "", py::arg("threads") = 0,
      "Ranking rows (kind, layer, column, ap), AP descending");

  mod.def(
      "read_ranking",
      [](const std::filesystem::path& p) { return ranking_tuples(read_ranking_csv(p)); }, py::arg("path"));
  mod.def(
      "write_ranking",
      [](const std::filesystem::path& p, const std::vector<RankTuple>& rows) {
        write_ranking_csv(p, ranking_from_tuples("", rows));
      },
      py::arg("path"), py::arg("rows"));
  mod.def(
      "read_mask",
      [](const std::filesystem::path& p) {
        const auto mask = read_mask_csv(p);
        std::vector<NeuronTuple> out;
        for (const auto& n : mask.neurons()) out.push_back(to_tuple(n));
        return out;
      },
      py::arg("path"));

  mod.def(
      "read_prompts",
      [](const std::filesystem::path& p) {
        py::list out;
        for (const auto& x : read_prompts_jsonl(p)) out.append(prompt_dict(x));
        return out;
      },
      py::arg("path"));
  mod.def(
      "write_prompts",
      [](const std::filesystem::path& p, const py::list& prompts) {
        std::vector<PromptInstance> ps;
        for (const auto& d : prompts) ps.push_back(prompt_from_dict(d.cast<py::dict>()));
        write_prompts_jsonl(p, ps);
      },
      py::arg("path"), py::arg("prompts"));
  mod.def(
      "read_labeled_set",
      [](const std::filesystem::path& jsonl, const std::filesystem::path& manifest) {
        const auto s = read_labeled_set(jsonl, manifest);
        py::list examples;
        for (const auto& e : s.examples) {
          auto d = prompt_dict(e.prompt);
          d["label"] = e.label;
          examples.append(d);
        }
        return examples;
      },
      py::arg("jsonl"), py::arg("manifest"));

  mod.def("continuation_matches", &continuation_matches, py::arg("continuation"), py::arg("object"));
  mod.def(
      "evaluate_predictions",
      [](const std::filesystem::path& p, const std::string& mask_id) {
        const auto r = evaluate_predictions(p, mask_id);
        py::dict d;
        d["accuracy"] = r.accuracy;
        d["n_correct"] = r.n_correct;
        d["n"] = r.outcomes.size();
        py::list correct;
        for (const auto& o : r.outcomes) correct.append(o.correct);
        d["correct"] = correct;
        return d;
      },
      py::arg("path"), py::arg("mask_id") = "external");

  mod.def("accuracy_drop", &accuracy_drop, py::arg("acc_original"), py::arg("acc_masked"));
  mod.def("sweep_ks", &sweep_ks, py::arg("n_neurons"), py::arg("fractions") = default_sweep_fractions());
  mod.def("spearman", &spearman, py::arg("x"), py::arg("y"));
}
