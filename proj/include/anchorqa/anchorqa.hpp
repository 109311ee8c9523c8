#pragma once

#include "anchorqa/config.hpp"
#include "anchorqa/corpus.hpp"
#include "anchorqa/embedding.hpp"
#include "anchorqa/error.hpp"
#include "anchorqa/eval.hpp"
#include "anchorqa/index.hpp"
#include "anchorqa/llm.hpp"
#include "anchorqa/pipeline.hpp"
#include "anchorqa/prompts.hpp"
#include "anchorqa/tokenizer.hpp"
#include "anchorqa/triple.hpp"
