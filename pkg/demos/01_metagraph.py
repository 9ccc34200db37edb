"""Build the topic-aware schema from the bundled standard one.

Context types (descriptions, reviews) are dropped first, then the four
topic triplet types are merged in.
"""

from __future__ import annotations

from topickg import kg as K

standard = K.default_metagraph()
context = standard.types_of_class(K.EntityClass.CONTEXT)
base = K.build_base_metagraph(standard, context)
topic = K.merge_metagraphs(base, K.build_topic_metagraph())

print("context types removed:", sorted(context))
for name, m in (("standard", standard), ("base", base), ("topic-aware", topic)):
    print(f"{name:12s} {len(m.entity_types)} entity types, {len(m.relation_types)} relations")

print("\ntopic triplet types:")
for t in sorted(K.build_topic_metagraph().triplet_types):
    print(f"  ({t.head}, {t.relation}, {t.tail})")

g = K.KnowledgeGraph(topic)
user = g.register_entity("U1", K.USER)
word = g.register_entity("hydrating", K.WORD)
print("\n(U1, mention, hydrating) conforms:", g.conforms(K.Triplet(user, K.MENTION, word)))
print("(hydrating, mention, U1) conforms:", g.conforms(K.Triplet(word, K.MENTION, user)))
