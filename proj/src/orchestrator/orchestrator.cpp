#include "ddap/orchestrator.hpp"

#include <algorithm>
#include <array>

#include <fmt/format.h>

namespace ddap {

namespace {

constexpr std::array<std::pair<Stage, std::string_view>, 5> kStageNames{{
    {Stage::problem_definition, "problem_definition"},
    {Stage::compute_spec, "compute_spec"},
    {Stage::pipeline_generation, "pipeline_generation"},
    {Stage::code_generation, "code_generation"},
    {Stage::done, "done"},
}};

constexpr std::array<std::string_view, 3> kExpertiseLevels{"novice", "intermediate", "expert"};

Stage next_stage(Stage s) { return static_cast<Stage>(static_cast<int>(s) + 1); }

std::string stage_name(Stage s) { return std::string(to_string(s)); }

/// Checks a stage-1/2 or one-shot envelope: questions need a message, finals
/// need a payload that validates once stamped. `prepare` may adjust the
/// stamped document before validation.
template <typename Prepare>
EnvelopeCheck artifact_check(ArtifactKind kind, bool questions_allowed, const ValidationOptions& validation,
                             Document& accepted, Prepare prepare) {
    return [=, &accepted](const Envelope& env) -> std::optional<std::string> {
        if (env.status == EnvelopeStatus::question) {
            if (!questions_allowed) {
                return std::string("this step is a single exchange; status must be \"final\"");
            }
            if (env.message.empty()) return std::string("a question needs a nonempty message");
            return std::nullopt;
        }
        if (!env.payload) return std::string("status \"final\" requires a payload");
        Document doc = stamp_artifact(*env.payload, kind);
        prepare(doc);
        auto report = validate_artifact(kind, doc, validation);
        if (!report.valid()) return fmt::format("payload is not a valid {}: {}", to_string(kind), report.summary());
        accepted = std::move(doc);
        return std::nullopt;
    };
}

Document without_header(Document doc) {
    doc.erase("artifact_kind");
    doc.erase("schema_version");
    return doc;
}

}  // namespace

std::string_view to_string(Stage stage) {
    for (const auto& [s, name] : kStageNames) {
        if (s == stage) return name;
    }
    return "unknown";
}

Stage stage_from_string(std::string_view name) {
    for (const auto& [s, n] : kStageNames) {
        if (n == name) return s;
    }
    throw InputError(fmt::format("unknown stage '{}'", name));
}

Stage producing_stage(ArtifactKind kind) {
    switch (kind) {
        case ArtifactKind::problem_definition: return Stage::problem_definition;
        case ArtifactKind::compute_spec: return Stage::compute_spec;
        case ArtifactKind::preprocessing_plan:
        case ArtifactKind::pipeline_set: return Stage::pipeline_generation;
        case ArtifactKind::code_artifact: return Stage::code_generation;
    }
    return Stage::done;
}

void to_json(Document& j, const Profile& p) { j = {{"domain", p.domain}, {"expertise", p.expertise}}; }

void from_json(const Document& j, Profile& p) {
    if (!j.is_object()) throw InputError("profile must be an object");
    auto field = [&](const char* name) {
        auto it = j.find(name);
        if (it == j.end() || !it->is_string() || it->get<std::string>().empty()) {
            throw InputError(fmt::format("profile.{} must be a nonempty string", name));
        }
        return it->get<std::string>();
    };
    p.domain = field("domain");
    p.expertise = field("expertise");
}

int SessionState::reprompts(Stage s) const {
    auto it = reprompt_counts.find(s);
    return it == reprompt_counts.end() ? 0 : it->second;
}

void to_json(Document& j, const SessionState& s) {
    j = Document::object();
    j["session_id"] = s.session_id;
    j["stage"] = to_string(s.stage);
    auto& history = j["stage_history"] = Document::array();
    for (auto st : s.stage_history) history.push_back(to_string(st));
    auto& conversations = j["conversations"] = Document::object();
    for (const auto& [st, turns] : s.conversations) conversations[stage_name(st)] = turns;
    auto& refs = j["artifact_refs"] = Document::object();
    for (const auto& [kind, ref] : s.artifact_refs) refs[std::string(to_string(kind))] = ref;
    auto& code = j["code_refs"] = Document::object();
    for (const auto& [index, ref] : s.code_refs) code[std::to_string(index)] = ref;
    j["artifact_history"] = s.artifact_history;
    j["selected_candidate"] = s.selected_candidate ? Document(*s.selected_candidate) : Document(nullptr);
    auto& counts = j["reprompt_counts"] = Document::object();
    for (const auto& [st, n] : s.reprompt_counts) counts[stage_name(st)] = n;
    j["profile"] = s.profile ? Document(*s.profile) : Document(nullptr);
    j["last_message"] = s.last_message;
    j["executions"] = s.executions;
}

void from_json(const Document& j, SessionState& s) {
    s.session_id = j.at("session_id").get<std::string>();
    s.stage = stage_from_string(j.at("stage").get<std::string>());
    s.stage_history.clear();
    for (const auto& st : j.at("stage_history")) s.stage_history.push_back(stage_from_string(st.get<std::string>()));
    s.conversations.clear();
    for (const auto& [name, turns] : j.at("conversations").items()) {
        s.conversations[stage_from_string(name)] = turns.get<std::vector<ConversationTurn>>();
    }
    s.artifact_refs.clear();
    for (const auto& [name, ref] : j.at("artifact_refs").items()) {
        s.artifact_refs[parse_artifact_kind(name)] = ref.get<ArtifactRef>();
    }
    s.code_refs.clear();
    for (const auto& [index, ref] : j.at("code_refs").items()) s.code_refs[std::stoi(index)] = ref.get<ArtifactRef>();
    s.artifact_history = j.at("artifact_history").get<std::vector<ArtifactRef>>();
    s.selected_candidate.reset();
    if (const auto& sel = j.at("selected_candidate"); !sel.is_null()) s.selected_candidate = sel.get<int>();
    s.reprompt_counts.clear();
    for (const auto& [name, n] : j.at("reprompt_counts").items()) s.reprompt_counts[stage_from_string(name)] = n.get<int>();
    s.profile.reset();
    if (const auto& p = j.at("profile"); !p.is_null()) s.profile = p.get<Profile>();
    s.last_message = j.at("last_message").get<std::string>();
    s.executions = j.at("executions").get<std::map<std::string, ExecutionResult>>();
}

std::string_view to_string(TurnResult::Kind kind) {
    return kind == TurnResult::Kind::agent_question ? "agent_question" : "stage_complete";
}

void to_json(Document& j, const TurnResult& r) {
    j = {{"kind", to_string(r.kind)},
         {"message", r.message},
         {"artifact_ref", r.artifact_ref ? Document(*r.artifact_ref) : Document(nullptr)},
         {"stage", to_string(r.stage)}};
}

// --- orchestrator -------------------------------------------------------------------

Orchestrator::Orchestrator(ArtifactStore& store, Backend& backend, OrchestratorOptions options)
    : store_(store), backend_(backend), options_(std::move(options)) {
    validate_limits(options_.limits);
}

void Orchestrator::save(const SessionState& state) { store_.save_session(state.session_id, state); }

namespace {

/// Runs `body`, then persists the session state whether or not it threw.
template <typename Save, typename Body>
auto saving(Save&& save, Body&& body) -> decltype(body()) {
    try {
        if constexpr (std::is_void_v<decltype(body())>) {
            body();
            save();
        } else {
            auto result = body();
            save();
            return result;
        }
    } catch (...) {
        try {
            save();
        } catch (...) {
            // The original failure is the one worth reporting.
        }
        throw;
    }
}

}  // namespace

void Orchestrator::advance(SessionState& state, Stage next) {
    if (next != next_stage(state.stage)) {
        throw StageError(fmt::format("cannot move from {} to {}", to_string(state.stage), to_string(next)));
    }
    state.stage = next;
    state.stage_history.push_back(next);
}

ArtifactRef Orchestrator::record(SessionState& state, ArtifactRef ref) {
    state.artifact_refs[ref.kind] = ref;
    if (ref.kind == ArtifactKind::code_artifact && ref.candidate_index) state.code_refs[*ref.candidate_index] = ref;
    state.artifact_history.push_back(ref);
    return ref;
}

SessionState Orchestrator::create_session(std::optional<Profile> profile) {
    SessionState state;
    do {
        state.session_id = new_session_id();
    } while (store_.session_exists(state.session_id));
    if (profile) {
        if (profile->domain.empty()) throw InputError("profile.domain must be nonempty");
        if (std::find(kExpertiseLevels.begin(), kExpertiseLevels.end(), profile->expertise) ==
            kExpertiseLevels.end()) {
            throw InputError(fmt::format("profile.expertise must be novice, intermediate or expert, got '{}'",
                                         profile->expertise));
        }
        state.profile = profile;
        state.conversations[Stage::problem_definition].push_back(
            {Speaker::system,
             fmt::format("Researcher profile: domain: {}; expertise: {}. Adapt the depth of your questions and "
                         "explanations to this researcher.",
                         profile->domain, profile->expertise),
             now_iso8601()});
    }
    save(state);
    return state;
}

SessionState Orchestrator::load_session(std::string_view session_id) const {
    auto doc = store_.load_session(session_id);
    if (!doc) throw NotFoundError(fmt::format("session '{}' not found", session_id));
    try {
        return doc->get<SessionState>();
    } catch (const Document::exception& e) {
        throw CorruptionError(fmt::format("session '{}' state is unreadable: {}", session_id, e.what()));
    }
}

std::vector<PromptArtifact> Orchestrator::prior_artifacts(const SessionState& state, Stage stage,
                                                          bool include_plan) const {
    // Every artifact produced before `stage`, in workflow order.
    static constexpr std::array<ArtifactKind, 4> kOrder{ArtifactKind::problem_definition, ArtifactKind::compute_spec,
                                                        ArtifactKind::preprocessing_plan, ArtifactKind::pipeline_set};
    std::vector<PromptArtifact> out;
    for (auto kind : kOrder) {
        const bool before = producing_stage(kind) < stage ||
                            (include_plan && stage == Stage::pipeline_generation && kind == ArtifactKind::preprocessing_plan);
        if (!before) continue;
        auto it = state.artifact_refs.find(kind);
        if (it == state.artifact_refs.end()) continue;
        out.push_back({kind, store_.load_artifact(it->second)});
    }
    return out;
}

std::vector<Snippet> Orchestrator::retrieve(const SessionState& state, Stage stage) const {
    if (!options_.corpus_dir) return {};
    std::string query;
    for (const auto& [st, turns] : state.conversations) {
        if (st > stage) continue;
        for (const auto& t : turns) {
            if (t.speaker == Speaker::user) query += t.text + "\n";
        }
    }
    return retrieve_context(query, *options_.corpus_dir, options_.retrieval_k).snippets;
}

Envelope Orchestrator::exchange(SessionState& state, Stage stage, const AgentConfig& config,
                                std::vector<PromptArtifact> prior, std::vector<Snippet> snippets,
                                std::vector<ConversationTurn> seed, const EnvelopeCheck& check, bool keep_history) {
    const auto name = stage_name(stage);
    auto& log = state.conversations[stage];
    const auto logged = log.size();
    const std::string session_id = state.session_id;
    const ExchangeContext ctx{config, backend_, name, std::move(prior), std::move(snippets), options_.retry,
                              [this, session_id, name](const Document& entry) {
                                  store_.append_jsonl(session_id, "logs", name, entry);
                              }};
    auto flush = [&](std::vector<ConversationTurn>& conversation) {
        if (!keep_history) log.insert(log.end(), conversation.begin(), conversation.end());
        for (auto i = logged; i < log.size(); ++i) {
            store_.append_jsonl(state.session_id, "conversations", name, log[i]);
        }
    };
    std::vector<ConversationTurn> local = std::move(seed);
    if (keep_history) {
        log.insert(log.end(), local.begin(), local.end());
        local.clear();
    }
    auto& conversation = keep_history ? log : local;
    auto& count = state.reprompt_counts[stage];
    try {
        auto env = converse(ctx, conversation, count, check);
        flush(conversation);
        return env;
    } catch (...) {
        flush(conversation);
        throw;
    }
}

std::string Orchestrator::preview_prompt(const SessionState& state) const {
    const auto config = state.stage == Stage::compute_spec ? roles::compute_specifier() : roles::problem_definer();
    const auto prior = prior_artifacts(state, state.stage);
    const auto snippets = retrieve(state, state.stage);
    auto it = state.conversations.find(state.stage);
    const std::vector<ConversationTurn> empty;
    return render_prompt(config, prior, snippets, it == state.conversations.end() ? empty : it->second);
}

TurnResult Orchestrator::submit_user_message(SessionState& state, std::string_view text) {
    if (state.stage != Stage::problem_definition && state.stage != Stage::compute_spec) {
        throw StageError(fmt::format("messages are accepted in problem_definition and compute_spec, not {}",
                                     to_string(state.stage)));
    }
    if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) throw InputError("message text is empty");
    return saving([&] { save(state); }, [&] {
        const Stage stage = state.stage;
        const auto kind = stage == Stage::problem_definition ? ArtifactKind::problem_definition
                                                             : ArtifactKind::compute_spec;
        const auto config = stage == Stage::problem_definition ? roles::problem_definer() : roles::compute_specifier();
        Document accepted;
        const auto check = artifact_check(kind, true, store_.validation(), accepted, [](Document&) {});
        const auto env = exchange(state, stage, config, prior_artifacts(state, stage), retrieve(state, stage),
                                  {{Speaker::user, std::string(text), now_iso8601()}}, check, true);
        TurnResult result;
        result.message = env.message;
        state.last_message = env.message;
        if (env.status == EnvelopeStatus::question) {
            result.kind = TurnResult::Kind::agent_question;
        } else {
            result.kind = TurnResult::Kind::stage_complete;
            result.artifact_ref = record(state, store_.persist_artifact(state.session_id, kind, accepted));
            advance(state, next_stage(stage));
        }
        result.stage = state.stage;
        return result;
    });
}

PreprocessingPlan Orchestrator::generate_preprocessing(SessionState& state) {
    if (state.stage != Stage::pipeline_generation) {
        throw StageError(fmt::format("preprocessing is generated in pipeline_generation, not {}",
                                     to_string(state.stage)));
    }
    return saving([&] { save(state); }, [&] {
        Document accepted;
        const auto check =
            artifact_check(ArtifactKind::preprocessing_plan, false, store_.validation(), accepted, [](Document&) {});
        const auto env = exchange(state, Stage::pipeline_generation, roles::preprocessing_designer(),
                                  prior_artifacts(state, Stage::pipeline_generation, false),
                                  retrieve(state, Stage::pipeline_generation), {}, check, false);
        state.last_message = env.message;
        record(state, store_.persist_artifact(state.session_id, ArtifactKind::preprocessing_plan, accepted));
        return accepted.get<PreprocessingPlan>();
    });
}

PipelineSet Orchestrator::generate_pipelines(SessionState& state) {
    if (state.stage != Stage::pipeline_generation) {
        throw StageError(fmt::format("pipelines are generated in pipeline_generation, not {}",
                                     to_string(state.stage)));
    }
    if (!state.has(ArtifactKind::preprocessing_plan)) {
        throw StageError("pipelines need a preprocessing plan; generate or import one first");
    }
    return saving([&] { save(state); }, [&] {
        auto prior = prior_artifacts(state, Stage::pipeline_generation);
        const Document plan = without_header(store_.load_artifact(state.artifact_refs.at(ArtifactKind::preprocessing_plan)));
        Document accepted;
        const auto check = artifact_check(ArtifactKind::pipeline_set, false, store_.validation(), accepted,
                                          [plan](Document& doc) { doc["preprocessing"] = plan; });
        const auto env = exchange(state, Stage::pipeline_generation, roles::pipeline_designer(), std::move(prior),
                                  retrieve(state, Stage::pipeline_generation), {}, check, false);
        state.last_message = env.message;
        record(state, store_.persist_artifact(state.session_id, ArtifactKind::pipeline_set, accepted));
        advance(state, Stage::code_generation);
        return accepted.get<PipelineSet>();
    });
}

void Orchestrator::select_pipeline(SessionState& state, int index) {
    if (!state.has(ArtifactKind::pipeline_set)) throw StageError("no pipeline set to select from yet");
    if (index < 1 || index > kCandidateCount) {
        throw RangeError(fmt::format("candidate index must be between 1 and {}, got {}", kCandidateCount, index));
    }
    state.selected_candidate = index;
    save(state);
}

GeneratedCode Orchestrator::generate_code(SessionState& state, std::optional<int> candidate_index) {
    if (state.stage != Stage::code_generation) {
        throw StageError(fmt::format("code is generated in code_generation, not {}", to_string(state.stage)));
    }
    const auto index = candidate_index ? candidate_index : state.selected_candidate;
    if (!index) throw StageError("no candidate given and none selected");
    if (*index < 1 || *index > kCandidateCount) {
        throw RangeError(fmt::format("candidate index must be between 1 and {}, got {}", kCandidateCount, *index));
    }
    return saving([&] { save(state); }, [&] {
        const auto set = store_.load_artifact(state.artifact_refs.at(ArtifactKind::pipeline_set)).get<PipelineSet>();
        const auto* candidate = set.candidate(*index);
        std::string platform;
        if (auto it = state.artifact_refs.find(ArtifactKind::compute_spec); it != state.artifact_refs.end()) {
            platform = store_.load_artifact(it->second).value("preferred_ml_platform", "");
        }
        const std::vector<ConversationTurn> seed{
            {Speaker::system,
             fmt::format("Implement candidate {}{}.", *index,
                         candidate ? fmt::format(" ({})", candidate->name) : std::string()),
             now_iso8601()}};
        Document accepted;
        const int k = *index;
        const auto check = artifact_check(ArtifactKind::code_artifact, false, store_.validation(), accepted,
                                          [k, platform](Document& doc) {
                                              doc["candidate_index"] = k;
                                              doc["repair_count"] = 0;
                                              if (!doc.contains("platform")) {
                                                  doc["platform"] = platform;
                                              }
                                          });
        const auto env = exchange(state, Stage::code_generation, roles::code_generator(),
                                  prior_artifacts(state, Stage::code_generation), {}, seed, check, false);
        state.last_message = env.message;
        GeneratedCode out;
        out.ref = record(state, store_.persist_artifact(state.session_id, ArtifactKind::code_artifact, accepted));
        out.code = accepted.get<CodeArtifact>();
        return out;
    });
}

std::vector<GeneratedCode> Orchestrator::generate_all_code(SessionState& state) {
    std::vector<GeneratedCode> out;
    for (int k = 1; k <= kCandidateCount; ++k) out.push_back(generate_code(state, k));
    return out;
}

ArtifactRef Orchestrator::import_artifact(SessionState& state, const ArtifactRef& source) {
    const Stage needed = producing_stage(source.kind);
    if (state.stage != needed) {
        throw StageError(fmt::format("a {} can only be imported in stage {}; session is in {}",
                                     to_string(source.kind), to_string(needed), to_string(state.stage)));
    }
    return saving([&] { save(state); }, [&] {
        auto ref = record(state, store_.import_artifact(state.session_id, source));
        state.last_message = fmt::format("Imported {} from session {}.", to_string(source.kind), source.session_id);
        if (source.kind == ArtifactKind::problem_definition || source.kind == ArtifactKind::compute_spec ||
            source.kind == ArtifactKind::pipeline_set) {
            advance(state, next_stage(state.stage));
        }
        return ref;
    });
}

const ArtifactRef& Orchestrator::require_code_ref(const SessionState& state, const ArtifactRef& ref) const {
    if (ref.kind != ArtifactKind::code_artifact) {
        throw InputError(fmt::format("{} is a {}, not a code artifact", ref.id(), to_string(ref.kind)));
    }
    for (const auto& r : state.artifact_history) {
        if (r.id() == ref.id()) return r;
    }
    throw NotFoundError(fmt::format("code artifact {} does not belong to session {}", ref.id(), state.session_id));
}

CodeArtifact Orchestrator::load_code(const ArtifactRef& ref) const {
    return store_.load_artifact(ref).get<CodeArtifact>();
}

ExecutionResult Orchestrator::execute(SessionState& state, const ArtifactRef& code_ref) {
    if (state.stage != Stage::code_generation && state.stage != Stage::done) {
        throw StageError(fmt::format("code can be executed from code_generation on, not in {}", to_string(state.stage)));
    }
    const auto ref = require_code_ref(state, code_ref);
    return saving([&] { save(state); }, [&] {
        const auto code = load_code(ref);
        const auto workspace = store_.make_workspace(state.session_id, ref.id().substr(state.session_id.size() + 1));
        auto result = execute_code(code, options_.limits, workspace);
        state.executions[ref.id()] = result;
        state.last_message = result.succeeded()
                                 ? fmt::format("{} ran successfully.", ref.id())
                                 : fmt::format("{} failed with exit status {}.", ref.id(), result.exit_status);
        if (result.succeeded() && state.stage == Stage::code_generation) advance(state, Stage::done);
        return result;
    });
}

GeneratedCode Orchestrator::repair(SessionState& state, const ArtifactRef& code_ref) {
    if (state.stage != Stage::code_generation) {
        throw StageError(fmt::format("code is repaired in code_generation, not {}", to_string(state.stage)));
    }
    const auto ref = require_code_ref(state, code_ref);
    auto it = state.executions.find(ref.id());
    if (it == state.executions.end()) throw StageError(fmt::format("{} has not been executed yet", ref.id()));
    if (it->second.succeeded()) throw StageError(fmt::format("{} already ran successfully", ref.id()));
    const auto failure = it->second;
    return saving([&] { save(state); }, [&] {
        const auto code = load_code(ref);
        const auto name = stage_name(Stage::code_generation);
        const std::string session_id = state.session_id;
        RepairContext ctx{backend_,
                          store_,
                          state.session_id,
                          prior_artifacts(state, Stage::code_generation),
                          roles::code_repairer(),
                          store_.validation().max_repairs,
                          options_.retry,
                          [this, session_id, name](const Document& entry) {
                              store_.append_jsonl(session_id, "logs", name, entry);
                          },
                          &state.reprompt_counts[Stage::code_generation]};
        auto repaired = repair_code(ctx, code, failure);
        record(state, repaired.ref);
        state.last_message = fmt::format("Repaired {} as {}.", ref.id(), repaired.ref.id());
        return GeneratedCode{std::move(repaired.code), std::move(repaired.ref)};
    });
}

RunOutcome Orchestrator::run_code(SessionState& state, const ArtifactRef& code_ref) {
    RunOutcome outcome;
    auto current = require_code_ref(state, code_ref);
    outcome.code = load_code(current);
    outcome.result = execute(state, current);
    outcome.executions = 1;
    while (!outcome.result.succeeded() && outcome.code.repair_count < store_.validation().max_repairs) {
        auto repaired = repair(state, current);
        current = repaired.ref;
        outcome.code = std::move(repaired.code);
        outcome.repaired_refs.push_back(current);
        ++outcome.repairs;
        outcome.result = execute(state, current);
        ++outcome.executions;
    }
    return outcome;
}

void Orchestrator::finalize(SessionState& state) {
    if (state.stage == Stage::done) return;
    if (state.stage != Stage::code_generation) {
        throw StageError(fmt::format("only code_generation can be finalized, session is in {}", to_string(state.stage)));
    }
    if (state.code_refs.empty()) throw StageError("finalizing needs at least one code artifact");
    advance(state, Stage::done);
    state.last_message = "Session finalized.";
    save(state);
}

ArtifactRef Orchestrator::resolve_ref(std::string_view id) const {
    const auto dot = id.find('.');
    if (dot == std::string_view::npos) throw NotFoundError(fmt::format("artifact '{}' not found", id));
    const auto session_id = id.substr(0, dot);
    if (!is_valid_session_id(session_id) || !store_.session_exists(session_id)) {
        throw NotFoundError(fmt::format("artifact '{}' not found", id));
    }
    const auto state = load_session(session_id);
    for (auto it = state.artifact_history.rbegin(); it != state.artifact_history.rend(); ++it) {
        if (it->id() == id) return *it;
    }
    throw NotFoundError(fmt::format("artifact '{}' not found", id));
}

// --- headless -------------------------------------------------------------------------

ArtifactSet run_headless(Orchestrator& orchestrator, std::string_view u0, const std::vector<std::string>& answers,
                         const HeadlessOptions& options) {
    auto state = orchestrator.create_session(options.profile);
    std::vector<std::string> inputs;
    inputs.emplace_back(u0);
    inputs.insert(inputs.end(), answers.begin(), answers.end());
    std::size_t turn = 0;

    auto step = [&](auto&& body) {
        const auto stage = state.stage;
        try {
            return body();
        } catch (const Error& e) {
            throw Error(e.code(), fmt::format("{} failed at turn {}: {}", to_string(stage), turn, e.what()));
        }
    };

    while (state.stage == Stage::problem_definition || state.stage == Stage::compute_spec) {
        if (turn >= inputs.size()) {
            throw InputError(fmt::format("{} failed at turn {}: no user answers left", to_string(state.stage), turn));
        }
        step([&] { return orchestrator.submit_user_message(state, inputs[turn]); });
        ++turn;
    }
    step([&] { return orchestrator.generate_preprocessing(state); });
    step([&] { return orchestrator.generate_pipelines(state); });
    ArtifactSet out;
    if (options.all_candidates) {
        for (auto& g : step([&] { return orchestrator.generate_all_code(state); })) out.code.push_back(g.ref);
    } else {
        step([&] {
            orchestrator.select_pipeline(state, options.candidate);
            return 0;
        });
        out.code.push_back(step([&] { return orchestrator.generate_code(state); }).ref);
    }
    if (options.execute) {
        for (const auto& ref : out.code) {
            auto outcome = step([&] { return orchestrator.run_code(state, ref); });
            const bool ok = outcome.result.succeeded();
            out.run = std::move(outcome);
            if (ok) break;
        }
    } else {
        orchestrator.finalize(state);
    }
    out.problem = state.artifact_refs.at(ArtifactKind::problem_definition);
    out.compute = state.artifact_refs.at(ArtifactKind::compute_spec);
    out.preprocessing = state.artifact_refs.at(ArtifactKind::preprocessing_plan);
    out.pipelines = state.artifact_refs.at(ArtifactKind::pipeline_set);
    out.state = std::move(state);
    return out;
}

}  // namespace ddap
