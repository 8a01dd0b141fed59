from rest_framework import serializers

from .exceptions import IncompatibleRule
from .kgstore import SlotKind, make_schema
from .merge import MergePolicy, MergeRule
from .models import ProtocolRun
from .psi import GROUPS


class PropertySlotSerializer(serializers.Serializer):
    name = serializers.CharField(max_length=64)
    kind = serializers.ChoiceField(choices=[kind.value for kind in SlotKind], default=SlotKind.CONTINUOUS.value)
    categories = serializers.ListField(child=serializers.CharField(), required=False, default=list)

    def validate(self, attrs):
        if attrs['kind'] == SlotKind.CATEGORICAL.value and not attrs['categories']:
            raise serializers.ValidationError({"categories": "Categorical slots must list their categories."})
        if attrs['kind'] != SlotKind.CATEGORICAL.value and attrs['categories']:
            raise serializers.ValidationError({"categories": "Only categorical slots take categories."})
        return attrs


class PartySourceSerializer(serializers.Serializer):
    triples = serializers.CharField()
    properties = serializers.CharField()
    keys = serializers.CharField(required=False, allow_blank=True)


class SlotRuleSerializer(serializers.Serializer):
    rule = serializers.ChoiceField(choices=[rule.value for rule in MergeRule])
    weights = serializers.ListField(child=serializers.FloatField(), required=False, default=list)


class FixedPointSerializer(serializers.Serializer):
    frac_bits = serializers.IntegerField(min_value=1, max_value=62, required=False)
    magnitude_bound = serializers.FloatField(min_value=1.0, required=False)


class DealerSerializer(serializers.Serializer):
    mode = serializers.ChoiceField(choices=['online', 'file'], default='online')
    file = serializers.CharField(required=False, allow_blank=True)

    def validate(self, attrs):
        if attrs['mode'] == 'file' and not attrs.get('file'):
            raise serializers.ValidationError({"file": "A file dealer needs a recording directory."})
        return attrs


class RunConfigSerializer(serializers.Serializer):
    parties = PartySourceSerializer(many=True)
    schema = PropertySlotSerializer(many=True)
    policy = serializers.DictField(child=SlotRuleSerializer(), required=False, default=dict)
    relations = serializers.DictField(child=serializers.IntegerField(min_value=0), required=False, default=dict)
    fixed_point = FixedPointSerializer(required=False)
    dealer = DealerSerializer(required=False)
    seed = serializers.IntegerField(min_value=0, required=False)
    link_threshold = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    feature_dim = serializers.IntegerField(min_value=8, max_value=4096, required=False)
    psi_group = serializers.ChoiceField(choices=sorted(GROUPS), required=False)

    def validate_parties(self, value):
        if len(value) < 2:
            raise serializers.ValidationError("A run needs at least 2 parties.")
        return value

    def validate_schema(self, value):
        names = [slot['name'] for slot in value]
        if len(names) != len(set(names)):
            raise serializers.ValidationError("Slot names must be unique.")
        return value

    def validate(self, attrs):
        schema = make_schema(attrs['schema'])
        try:
            MergePolicy.from_config(attrs.get('policy')).validate(schema)
        except IncompatibleRule as exc:
            raise serializers.ValidationError({"policy": str(exc)})
        return attrs

    def slot_schema(self):
        return make_schema(self.validated_data['schema'])


class ProtocolRunSerializer(serializers.ModelSerializer):
    command_display = serializers.CharField(source='get_command_display', read_only=True)

    class Meta:
        model = ProtocolRun
        fields = '__all__'
        read_only_fields = ('id', 'created_at')


class AlignmentSerializer(serializers.Serializer):
    parties = serializers.ListField(child=serializers.IntegerField())
    kind = serializers.CharField()
    pairs = serializers.ListField(child=serializers.ListField(child=serializers.CharField()))
    similarities = serializers.ListField(child=serializers.FloatField())


class GlobalEntitySerializer(serializers.Serializer):
    global_id = serializers.IntegerField()
    name = serializers.CharField()
    key = serializers.CharField()
    owners = serializers.ListField(child=serializers.IntegerField())
    members = serializers.ListField(child=serializers.ListField())


class MergeReportSerializer(serializers.Serializer):
    matched = AlignmentSerializer(many=True)
    rules = serializers.DictField(child=serializers.CharField())
    global_ids = GlobalEntitySerializer(many=True)
    common = serializers.ListField(child=serializers.CharField())
    run = ProtocolRunSerializer(required=False)


class SelftestResultSerializer(serializers.Serializer):
    name = serializers.CharField()
    bound = serializers.FloatField(allow_null=True)
    observed = serializers.FloatField(allow_null=True)
    passed = serializers.BooleanField()
    seconds = serializers.FloatField()
    detail = serializers.CharField(allow_blank=True, required=False)
