from faithkit.models.interfaces import (
    MASK,
    ConditionalScorer,
    EntitySpan,
    EntityTagger,
    Generator,
    Infiller,
    PromptTemplate,
    SamplingConfig,
    TokenConsistencyAligner,
    TokenEncoder,
    ValidatedAligner,
    ValidatedEncoder,
    ValidatedGenerator,
    ValidatedInfiller,
    ValidatedScorer,
    ValidatedTagger,
)
from faithkit.models.stubs import (
    ConstantInfiller,
    ContextInfiller,
    CopyScorer,
    FixedAligner,
    GazetteerTagger,
    HashEncoder,
    LexicalAligner,
    LookupEncoder,
    PoolInfiller,
    ScorerAligner,
    TurnGenerator,
    make_fixed_generator,
    make_table_scorer,
)
from faithkit.models.tiny import BOS, EOS, TinyModel, make_tiny_model, vocab_from_texts
