// Prompt template texts. Line breaks, blank lines and indentation are part of
// the template and must not be reformatted; the golden files under
// tests/golden pin the rendered bytes.

#include <string>
#include <string_view>

#include "vocabdiff/error.hpp"
#include "vocabdiff/prompting.hpp"

namespace vocabdiff {

namespace {

constexpr std::string_view kBasic =
    "Rate how difficult it is for learners to guess the English word based on the {l1_name} word, context and "
    "clue on a scale from 1 to 5 (1=very easy, 5=very difficult).\n"
    "{l1_name} word: {l1_word}\n"
    "{l1_name} context: {l1_context}\n"
    "Clue: {clue}\n"
    "English word: {en_word}\n"
    "Difficulty:";

constexpr std::string_view kShort = "{l1_word} ### {l1_context} ### {clue} ### {en_word} ### Difficulty (1 to 5):";

constexpr std::string_view kRegression = "[CLS] {l1_word} [SEP] {l1_context} [SEP] {clue} [SEP] {en_word} [SEP]";

constexpr std::string_view kRegressionMask = "[CLS] {prompt} [MASK] [SEP]";

constexpr std::string_view kAmbiguity =
    "You are a language education expert.\n"
    "\n"
    "TASK\n"
    "Given:\n"
    "- an English word form (the \"English word\"),\n"
    "- an L1 gloss/translation (the \"{l1_name} item\"),\n"
    "- and the L1 usage context sentence (the \"{l1_name} context\"),\n"
    "decide whether the English word, when used to express the meaning suggested by the L1 item + context,\n"
    "meets BOTH conditions:\n"
    "\n"
    "A) Lexical ambiguity: the English word has multiple established senses that share the same form\n"
    "   (polysemy or homonymy), such that another common sense could plausibly be activated/confused.\n"
    "\n"
    "B) Unfamiliarity for L2 learners: in this meaning/usage, the English word is likely to be unfamiliar\n"
    "   or challenging for typical second-language learners (e.g., less frequent sense, idiomatic/figurative,\n"
    "   domain-specific usage, nonliteral extension).\n"
    "\n"
    "OUTPUT REQUIREMENTS\n"
    "- Output \"1\" if BOTH conditions (A and B) are met; otherwise output \"0\".\n"
    "- Output MUST be exactly one character: 1 or 0.\n"
    "- Do NOT include explanations, alternatives, quotes, or extra text.\n"
    "\n"
    "EXAMPLE 1\n"
    "English word: {ex_en_word}\n"
    "{l1_name} item: {ex_easy_word_l1}\n"
    "{l1_name} context: {ex_easy_context_l1}\n"
    "Is the English word ambiguous and unfamiliar: 0\n"
    "\n"
    "EXAMPLE 2\n"
    "English word: {ex_en_word}\n"
    "{l1_name} item: {ex_hard_word_l1}\n"
    "{l1_name} context: {ex_hard_context_l1}\n"
    "Is the English word ambiguous and unfamiliar: 1\n"
    "\n"
    "NOW DECIDE\n"
    "English word: {en_word}\n"
    "{l1_name} item: {l1_word}\n"
    "{l1_name} context: {l1_context}\n"
    "Is the English word ambiguous and unfamiliar:";

constexpr std::string_view kSpelling =
    "TASK\n"
    "You are required to rate English spelling difficulty on a 1–5 scale, where 1 = very easy and 5 = very "
    "difficult.\n"
    "You will be given English pronunciation and the target word's translation in Chinese, Spanish, and German.\n"
    "Evaluate how difficult it would be for learners with Chinese, Spanish, and German L1 backgrounds to spell the "
    "English word with that pronunciation correctly when they know the translation in their native language.\n"
    "\n"
    "OUTPUT REQUIREMENTS\n"
    "- Output exactly one digit (1, 2, 3, 4, or 5) for each L1, separated by commas, in the order of Chinese, "
    "Spanish, German.\n"
    "- Do not include any other text.\n"
    "\n"
    "EXAMPLE 1\n"
    "English pronunciation: '{hard_pron}'\n"
    "Chinese: {hard_cn}\n"
    "Spanish: {hard_es}\n"
    "German: {hard_de}\n"
    "Result: {hard_cn_score},{hard_es_score},{hard_de_score}\n"
    "\n"
    "EXAMPLE 2\n"
    "English pronunciation: '{easy_pron}'\n"
    "Chinese: {easy_cn}\n"
    "Spanish: {easy_es}\n"
    "German: {easy_de}\n"
    "Result: {easy_cn_score},{easy_es_score},{easy_de_score}\n"
    "\n"
    "NOW DECIDE\n"
    "English pronunciation: {en_pron}\n"
    "Chinese: {l1_word_cn}\n"
    "Spanish: {l1_word_es}\n"
    "German: {l1_word_de}\n"
    "Result:";

constexpr std::string_view kCalque =
    "You are a linguist and your task is to decide whether an English word is a morpheme-for-morpheme translation "
    "of any of the given {l1_name} equivalents.\n"
    "The morpheme-for-morpheme mapping must be 1:1. 1:N or other mappings do not count.\n"
    "Single morpheme translations or simple borrowings/cognates do not count either.\n"
    "Respond only with YES or NO.\n"
    "\n"
    "wave/ola: NO (reason: single morpheme)\n"
    "ecosystem/ecosistema: NO (reason: simple cognate)\n"
    "hotdog/perro caliente: YES (reason: hot=caliente, dog=perro)\n"
    "stare/mirar fijamente: NO (reason: not a 1:1 mapping)\n"
    "{en_word}/{l1_word}:";

constexpr std::string_view kCalqueV1 =
    "You are a bilinguistics expert.\n"
    "\n"
    "TASK\n"
    "Given a {l1_name} item and an English item, decide whether there exists a best-matching candidate in the "
    "{l1_name} item that is a component-by-component (morpheme-level) translation of the English item.\n"
    "\n"
    "A component-by-component mapping means that the meaningful parts\n"
    "(words, roots, prefixes, or suffixes) of the English item are directly translated\n"
    "into corresponding meaningful parts in the {l1_name} item.\n"
    "\n"
    "Procedure (internal; do NOT output these steps):\n"
    "1) If the {l1_name} item contains multiple candidates, select exactly ONE candidate: the one that aligns best "
    "component-wise with the English form.\n"
    "2) Judge ONLY that selected candidate for component-by-component mapping.\n"
    "\n"
    "OUTPUT REQUIREMENTS\n"
    "- Output \"1\" if the selected best candidate is a component-by-component mapping; otherwise output \"0\".\n"
    "- Output MUST be exactly one character: 1 or 0.\n"
    "- Do NOT include explanations, alternatives, quotes, or extra text.\n"
    "\n"
    "EXAMPLE\n"
    "{l1_name} item: {ex_calque_l1}\n"
    "English item: {ex_calque_en}\n"
    "Is word-for-word mapping: 1\n"
    "\n"
    "NOW DECIDE\n"
    "{l1_name} item: {l1_word}\n"
    "English item: {en_word}\n"
    "Is word-for-word mapping:";

constexpr std::string_view kTrickShort =
    "You are bilingual in {l1_name} and English and your task is to find the best English translation for a "
    "{l1_name} word given a context and constraints. The constraints are given in the form of a clue, e.g., "
    "\"b _ _ _\", meaning that the word starts with the (upper or lower case) letter B and has 4 letters. You must "
    "give a single English word in dictionary form (lemma) as a response.\n"
    "\n"
    "{solve_example}\n"
    "{l1_name} word: {l1_word}\n"
    "{l1_name} context: {l1_context}\n"
    "Clue: {clue}\n"
    "English word:";

constexpr std::string_view kTrickLong =
    "You are bilingual in {l1_name} and English.\n"
    "\n"
    "TASK\n"
    "Given a word in {l1_name}, its usage context, and a spelling clue, find the single best English translation "
    "that fits BOTH the meaning and the spelling constraint.\n"
    "\n"
    "INPUTS\n"
    "- {l1_name} word: a single word to translate\n"
    "- {l1_name} context: a sentence showing how the word is used\n"
    "- Clue: a pattern such as \"b _ _ _\", where:\n"
    "  * the first letter is indicated (case-insensitive)\n"
    "  * \"_\" indicates subsequent unknown letter\n"
    "  * the total number of letters must match exactly\n"
    "\n"
    "OUTPUT REQUIREMENTS\n"
    "- Output EXACTLY ONE English word\n"
    "- The word must be:\n"
    "  * a dictionary form (lemma)\n"
    "  * a single token (no spaces, hyphens, or punctuation)\n"
    "  * consistent with the context\n"
    "  * consistent with the clue\n"
    "- Do NOT include explanations, alternatives, quotes, or extra text.\n"
    "\n"
    "EXAMPLES\n"
    "{solve_example}\n"
    "NOW SOLVE\n"
    "{l1_name} word: {l1_word}\n"
    "{l1_name} context: {l1_context}\n"
    "Clue: {clue}\n"
    "English word:";

constexpr std::string_view kDifficulty =
    "You are an English language teacher teaching learners whose native language is {l1_name}. Your task is to "
    "rate the difficulty of a vocabulary test item for native {l1_name} speakers learning English.\n"
    "\n"
    "The test item consists of:\n"
    "- a {l1_name} word,\n"
    "- a {l1_name} context,\n"
    "- a clue indicating the first letter and word length of the English word,\n"
    "- the target English word, which is the only correct answer.\n"
    "\n"
    "Letter case does not matter. The learners are likely to respond with synonyms or misspellings to some items, "
    "but such responses are considered incorrect. Treat this as increasing the difficulty.\n"
    "\n"
    "Consider learners from beginner to advanced levels, weighting the intermediate learner most heavily. Rate how "
    "difficult the item is on a scale from 1 to 5:\n"
    "1 = very easy (almost everybody answers correctly)\n"
    "5 = very difficult (almost nobody answers correctly)\n"
    "\n"
    "Output exactly one digit (1, 2, 3, 4, or 5). Do not include any other text.\n"
    "\n"
    "{examples}\n"
    "{l1_name} word: {l1_word}\n"
    "{l1_name} context: {l1_context}\n"
    "Clue: {clue}\n"
    "English word: {en_word}\n"
    "Difficulty:";

}  // namespace

std::string_view template_body(TemplateId id) {
    switch (id) {
        case TemplateId::basic: return kBasic;
        case TemplateId::short_prompt: return kShort;
        case TemplateId::regression: return kRegression;
        case TemplateId::regression_mask: return kRegressionMask;
        case TemplateId::ambiguity: return kAmbiguity;
        case TemplateId::spelling: return kSpelling;
        case TemplateId::calque: return kCalque;
        case TemplateId::calque_v1: return kCalqueV1;
        case TemplateId::trick_short: return kTrickShort;
        case TemplateId::trick_long: return kTrickLong;
        case TemplateId::difficulty: return kDifficulty;
    }
    throw InputError("unknown template");
}

Bindings reference_demonstrations(TemplateId id, std::string_view l1) {
    Bindings b;
    switch (id) {
        case TemplateId::ambiguity:
            if (l1 == "es") {
                b["ex_en_word"] = "bank";
                b["ex_easy_word_l1"] = "banco";
                b["ex_easy_context_l1"] = "Deposité el dinero en el banco.";
                b["ex_hard_word_l1"] = "orilla";
                b["ex_hard_context_l1"] = "Nos sentamos en la orilla del río.";
            }
            break;
        case TemplateId::calque_v1:
            if (l1 == "zh") {
                b["ex_calque_l1"] = "热狗";
                b["ex_calque_en"] = "hot dog";
            }
            break;
        case TemplateId::trick_short:
        case TemplateId::trick_long:
            if (l1 == "de")
                b["solve_example"] =
                    format_solve_example("German", "Erdbeere", "Ich mag keine Erdbeeren.", "strawberry");
            break;
        case TemplateId::spelling:
            b["hard_cn_score"] = "5";
            b["hard_es_score"] = "4";
            b["hard_de_score"] = "4";
            b["easy_cn_score"] = "1";
            b["easy_es_score"] = "1";
            b["easy_de_score"] = "1";
            break;
        default:
            break;
    }
    return b;
}

}  // namespace vocabdiff
