#pragma once

#include "corpuskit/corpus.hpp"
#include "corpuskit/dedup.hpp"
#include "corpuskit/error.hpp"
#include "corpuskit/filter.hpp"
#include "corpuskit/hash.hpp"
#include "corpuskit/ngram_lm.hpp"
#include "corpuskit/ocr_quality.hpp"
#include "corpuskit/parallel.hpp"
#include "corpuskit/pipeline.hpp"
#include "corpuskit/quality_rules.hpp"
#include "corpuskit/resources.hpp"
#include "corpuskit/tokenizer.hpp"
#include "corpuskit/unicode.hpp"
