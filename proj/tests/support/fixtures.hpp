#pragma once

// Shared trajectory fixtures.  Each machine-form fixture is laid out exactly
// as the runtime emits text — sequential phase ending at "</Outlines>",
// injected "<Thread> i:" seeds, thread bodies ending "</Thread>", blocks
// closed with an injected "</Parallel>" — so replaying it through the mock
// must reproduce it byte for byte.  The human-form fixture keeps cosmetic
// whitespace between tags and inline "<Thread>1:" labels to exercise the
// parser on text the runtime itself would not produce.

#include <string>

namespace fixtures {

// --- Distance problem, human-form markup (parser coverage only). ---------

inline const std::string human_prompt =
    "What is the distance, in units, between the points $(2,-6)$ and "
    "$(-4,3)$? Express your answer in simplest radical form. Think step by "
    "step and put your answer in \\boxed{}.";

inline const std::string human_response =
    "<think>\n"
    "We will use the distance formula d = sqrt((\xCE\x94x)^2 + (\xCE\x94y)^2).\n"
    "\n"
    "<Parallel>\n"
    "<Outlines>\n"
    "<Outline>1: Compute the squared horizontal difference (\xCE\x94x)^2.</Outline>\n"
    "<Outline>2: Compute the squared vertical difference (\xCE\x94y)^2.</Outline>\n"
    "</Outlines>\n"
    "\n"
    "<Thread>1: \xCE\x94x = 2 - (-4) = 6, so (\xCE\x94x)^2 = 6^2 = 36.</Thread>\n"
    "<Thread>2: \xCE\x94y = -6 - 3 = -9, so (\xCE\x94y)^2 = (-9)^2 = 81.</Thread>\n"
    "</Parallel>\n"
    "\n"
    "Sum the results: 36 + 81 = 117.\n"
    "Distance d = sqrt(117) = sqrt(9\xC2\xB7" "13) = 3*sqrt(13).\n"
    "Therefore, the answer is \\boxed{3\\sqrt{13}}.\n"
    "</think>\n"
    "The distance between $(2,-6)$ and $(-4,3)$ is $\\boxed{3\\sqrt{13}}$.";

inline const std::string human_gold = "3\\sqrt{13}";

// --- Distance problem, machine form: one block, two threads. -------------

inline const std::string distance_prompt = human_prompt;
inline const std::string distance_gold = human_gold;

inline const std::string distance_seq1 =
    "<think>\n"
    "We will use the distance formula d = sqrt((dx)^2 + (dy)^2).\n"
    "<Parallel>\n"
    "<Outlines>\n"
    "<Outline>1: Compute the squared horizontal difference (dx)^2.</Outline>\n"
    "<Outline>2: Compute the squared vertical difference (dy)^2.</Outline>\n"
    "</Outlines>";
inline const std::string distance_seed1 = "<Thread> 1:";
inline const std::string distance_body1 =
    " dx = 2 - (-4) = 6, so (dx)^2 = 6^2 = 36.";
inline const std::string distance_seed2 = "<Thread> 2:";
inline const std::string distance_body2 =
    " dy = -6 - 3 = -9, so (dy)^2 = (-9)^2 = 81.";
inline const std::string distance_tail =
    "\nSum the results: 36 + 81 = 117.\n"
    "Distance d = sqrt(117) = sqrt(9*13) = 3*sqrt(13).\n"
    "Therefore, the answer is \\boxed{3\\sqrt{13}}.\n"
    "</think>\n"
    "The distance between (2,-6) and (-4,3) is $\\boxed{3\\sqrt{13}}$.";

inline const std::string distance_response =
    distance_seq1 + distance_seed1 + distance_body1 + "</Thread>" +
    distance_seed2 + distance_body2 + "</Thread>" + "</Parallel>" +
    distance_tail;

// --- Sum problem, machine form: two blocks, two threads each (7 units). ---

inline const std::string sum_prompt =
    "Compute the sum of the integers from 1 to 6. Think step by step and "
    "put your answer in \\boxed{}.";
inline const std::string sum_gold = "21";

inline const std::string sum_seq1 =
    "<think>\n"
    "Split the work.\n"
    "<Parallel>\n"
    "<Outlines>\n"
    "<Outline>1: Add the odd numbers.</Outline>\n"
    "<Outline>2: Add the even numbers.</Outline>\n"
    "</Outlines>";
inline const std::string sum_b1t1 = " 1 + 3 + 5 = 9.";
inline const std::string sum_b1t2 = " 2 + 4 + 6 = 12.";
inline const std::string sum_seq2 =
    "\nCombine: 9 + 12 = 21.\n"
    "Now verify with two independent methods.\n"
    "<Parallel>\n"
    "<Outlines>\n"
    "<Outline>1: Apply the closed-form formula.</Outline>\n"
    "<Outline>2: Sum the run directly.</Outline>\n"
    "</Outlines>";
inline const std::string sum_b2t1 = " 6 * 7 / 2 = 21.";
inline const std::string sum_b2t2 = " 1 + 2 + 3 + 4 + 5 + 6 = 21.";
inline const std::string sum_tail =
    "\nBoth methods agree.\n"
    "Therefore, the answer is \\boxed{21}.\n"
    "</think>\n"
    "The answer is $\\boxed{21}$.";

inline const std::string sum_response =
    sum_seq1 + "<Thread> 1:" + sum_b1t1 + "</Thread>" + "<Thread> 2:" +
    sum_b1t2 + "</Thread>" + "</Parallel>" + sum_seq2 + "<Thread> 1:" +
    sum_b2t1 + "</Thread>" + "<Thread> 2:" + sum_b2t2 + "</Thread>" +
    "</Parallel>" + sum_tail;

// --- Purely sequential control. -------------------------------------------

inline const std::string plain_prompt =
    "What is 2 + 2? Think step by step and put your answer in \\boxed{}.";
inline const std::string plain_gold = "4";
inline const std::string plain_response =
    "<think>\n"
    "2 + 2 = 4.\n"
    "Therefore, the answer is \\boxed{4}.\n"
    "</think>\n"
    "The answer is $\\boxed{4}$.";

// --- Long-thread variant: thread 2 greatly outweighs the per-thread cap ---
// used in truncation tests, so replay must fall back to structural matching.

inline std::string long_thread_body() {
  std::string body;
  for (int i = 1; i <= 40; ++i) {
    body += " term" + std::to_string(i);
  }
  body += " so the partial sum is 820.";
  return body;
}

inline const std::string long_prompt =
    "Add the first 40 terms. Think step by step and put your answer in "
    "\\boxed{}.";
inline const std::string long_gold = "820";
inline const std::string long_seq1 =
    "<think>\n"
    "Two ways to tally the series.\n"
    "<Parallel>\n"
    "<Outlines>\n"
    "<Outline>1: Pair terms from the ends.</Outline>\n"
    "<Outline>2: Accumulate term by term.</Outline>\n"
    "</Outlines>";
inline const std::string long_body1 = " 40 * 41 / 2 = 820.";
inline const std::string long_tail =
    "\nBoth give 820.\n"
    "Therefore, the answer is \\boxed{820}.\n"
    "</think>\n"
    "The answer is $\\boxed{820}$.";

inline std::string long_response() {
  return long_seq1 + "<Thread> 1:" + long_body1 + "</Thread>" +
         "<Thread> 2:" + long_thread_body() + "</Thread>" + "</Parallel>" +
         long_tail;
}

}  // namespace fixtures
